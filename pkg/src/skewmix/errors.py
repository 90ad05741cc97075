"""Exception types raised across skewmix."""


class SkewmixError(Exception):
    """Base class for all package errors."""


class DomainError(SkewmixError, ValueError):
    """A point lies outside the domain where a map is defined (e.g. a branch endpoint).

    ``point`` is the offending value; ``iterate`` is the orbit index when the
    failure happened while following an orbit.
    """

    def __init__(self, message, point=None, iterate=None):
        super().__init__(message)
        self.point = point
        self.iterate = iterate


class SingularityError(DomainError):
    """A point lies on the singularity set of a fibre map."""


class TruncationError(SkewmixError, ValueError):
    """A cell index exceeds the truncation level of an inducing scheme."""


class ConvergenceError(SkewmixError, ArithmeticError):
    """An iterative method failed to converge; carries the last iterate data."""

    def __init__(self, message, estimate=None, residual=None, iterations=None):
        super().__init__(message)
        self.estimate = estimate
        self.residual = residual
        self.iterations = iterations


class NoiseFloorError(SkewmixError, ArithmeticError):
    """A correlation series has too few lags above its noise floor to fit a rate."""

    def __init__(self, message, lag=None):
        super().__init__(message)
        self.lag = lag

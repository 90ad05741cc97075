"""Base maps, singularity sets, fibre maps and the skew-product on [0,1] x S^1.

The circle is R/Z, stored as reals in [0, 1).  Birkhoff sums of a fibre map
are kept as real lifts; reduction mod 1 happens only when a circle
coordinate is updated.

All objects are immutable.  Scalar entry points (``eval_base``,
``eval_fibre`` ...) validate their input and raise; the ``__call__`` /
``value`` / ``derivative`` methods are vectorised over numpy arrays and do
no domain checking, for use in sweeps.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DomainError, SingularityError

__all__ = [
    "BaseMap",
    "SingularitySet",
    "FibreMap",
    "PowerFibre",
    "SmoothCounterexampleFibre",
    "CoboundaryFibre",
    "TabulatedFibre",
    "SkewState",
    "doubling_map",
    "coboundary_of",
    "wrap",
    "circle_dist",
    "eval_base",
    "eval_fibre",
    "eval_skew",
    "dist_trunc",
    "twist_ratio",
    "make_fibre",
    "parse_config",
    "load_config",
]


def wrap(u):
    """Reduce ``u`` modulo 1 into [0, 1) (guards the ``-tiny % 1 == 1.0`` case)."""
    r = np.mod(u, 1.0)
    if np.ndim(r) == 0:
        r = float(r)
        return 0.0 if r >= 1.0 else r
    r[r >= 1.0] = 0.0
    return r


def circle_dist(u, v):
    """Distance on R/Z."""
    d = np.abs(np.mod(np.asarray(u, dtype=float) - np.asarray(v, dtype=float), 1.0))
    return np.minimum(d, 1.0 - d)


# --------------------------------------------------------------------------
# base map
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BaseMap:
    """Piecewise affine expanding self-map of [0, 1].

    Branch ``i`` acts on ``[breakpoints[i], breakpoints[i+1])`` as
    ``x -> slopes[i] * x + intercepts[i]``.  Coefficients may be ints or
    Fractions so the scalar path stays exact on rationals.
    """

    breakpoints: tuple
    slopes: tuple
    intercepts: tuple
    name: str = "custom"

    def __post_init__(self):
        bp = self.breakpoints
        if len(bp) < 2 or bp[0] != 0 or bp[-1] != 1:
            raise ValueError("breakpoints must start at 0 and end at 1")
        if any(b1 <= b0 for b0, b1 in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if not (len(self.slopes) == len(self.intercepts) == len(bp) - 1):
            raise ValueError("one slope and one intercept per branch")
        for i, (s, c) in enumerate(zip(self.slopes, self.intercepts)):
            if abs(s) <= 1:
                raise ValueError(f"branch {i} is not expanding (slope {s})")
            lo, hi = s * bp[i] + c, s * bp[i + 1] + c
            if min(lo, hi) < 0 or max(lo, hi) > 1:
                raise ValueError(f"branch {i} does not map into [0, 1]")
        object.__setattr__(self, "_inner", np.array([float(b) for b in bp[1:-1]]))
        object.__setattr__(self, "_slopes", np.array([float(s) for s in self.slopes]))
        object.__setattr__(self, "_icpts", np.array([float(c) for c in self.intercepts]))

    @property
    def branch_count(self) -> int:
        return len(self.slopes)

    @property
    def branch_domains(self) -> list[tuple]:
        bp = self.breakpoints
        return [(bp[i], bp[i + 1]) for i in range(self.branch_count)]

    @property
    def expansion_floor(self) -> float:
        return float(min(abs(s) for s in self.slopes))

    @property
    def excluded_points(self) -> tuple:
        """Points where no branch is evaluated: interior breakpoints and 1."""
        return tuple(self.breakpoints[1:-1]) + (self.breakpoints[-1],)

    @property
    def is_doubling(self) -> bool:
        return (
            self.breakpoints == (0, Fraction(1, 2), 1)
            and tuple(self.slopes) == (2, 2)
            and tuple(self.intercepts) == (0, -1)
        )

    def branch_index(self, x):
        if isinstance(x, np.ndarray):
            return np.searchsorted(self._inner, x, side="right")
        return bisect.bisect_right(self.breakpoints[1:-1], x)

    def __call__(self, x):
        if isinstance(x, np.ndarray):
            i = self.branch_index(x)
            return self._slopes[i] * x + self._icpts[i]
        i = self.branch_index(x)
        return self.slopes[i] * x + self.intercepts[i]

    def derivative(self, x):
        if isinstance(x, np.ndarray):
            return self._slopes[self.branch_index(x)]
        return float(self.slopes[self.branch_index(x)])

    def orbit(self, x, n: int):
        """Return ``[x, f x, ..., f^{n-1} x]`` (stacked along axis 0 for arrays)."""
        pts = []
        for _ in range(n):
            pts.append(x)
            x = self(x)
        if isinstance(x, np.ndarray):
            return np.stack(pts) if pts else np.empty((0,) + x.shape)
        return pts

    def check_point(self, x, iterate=None) -> None:
        if not 0 <= x <= 1:
            raise DomainError(f"x={x!r} lies outside [0, 1]", point=x, iterate=iterate)
        for e in self.excluded_points:
            if x == e:
                where = "" if iterate is None else f" at iterate {iterate}"
                raise DomainError(
                    f"x={x!r} is the branch endpoint {e}{where}", point=e, iterate=iterate
                )


def doubling_map() -> BaseMap:
    """``x -> 2x mod 1`` with branches [0, 1/2) and [1/2, 1)."""
    return BaseMap((0, Fraction(1, 2), 1), (2, 2), (0, -1), name="doubling")


# --------------------------------------------------------------------------
# singularity sets
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SingularitySet:
    points: tuple

    def __post_init__(self):
        pts = tuple(sorted(set(self.points)))
        if not pts:
            raise ValueError("singularity set must be nonempty")
        if any(not 0 <= p <= 1 for p in pts):
            raise ValueError("singular points must lie in [0, 1]")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "_arr", np.array([float(p) for p in pts]))

    def dist(self, x):
        if isinstance(x, np.ndarray):
            return np.min(np.abs(x[..., None] - self._arr), axis=-1)
        return min(abs(float(x) - p) for p in self._arr)

    def __contains__(self, x) -> bool:
        return any(x == p for p in self.points)


def dist_trunc(S: SingularitySet, delta: float, x):
    """Truncated distance: ``dist(x, S)`` if it is below ``delta``, else 1."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    d = S.dist(x)
    if isinstance(d, np.ndarray):
        return np.where(d < delta, d, 1.0)
    return d if d < delta else 1.0


# --------------------------------------------------------------------------
# fibre maps
# --------------------------------------------------------------------------


class FibreMap:
    """Real-valued fibre function, C^1 off a finite singular set.

    Subclasses provide vectorised ``value`` and ``derivative``.  ``s`` and
    ``C`` record a twist estimate ``|Dphi / Df| <= C dist(x, S)^{-s}``
    valid for the doubling base map.
    """

    name = "fibre"
    singularities: SingularitySet
    singular_exponent: float
    twist_constant: float

    def value(self, x):
        raise NotImplementedError

    def derivative(self, x):
        raise NotImplementedError

    def twist_envelope(self, x):
        return self.twist_constant * self.singularities.dist(x) ** (-self.singular_exponent)

    def describe(self) -> dict:
        return {"fibre": self.name}


@dataclass(frozen=True)
class PowerFibre(FibreMap):
    """``phi(x) = (1 - x)^a``, singular at 1."""

    a: float
    name = "power"

    def __post_init__(self):
        if not 0 < self.a <= 1:
            raise ValueError(f"exponent a must lie in (0, 1], got {self.a}")

    @property
    def singularities(self):
        return SingularitySet((1,))

    @property
    def singular_exponent(self):
        return 1.0 - self.a

    @property
    def twist_constant(self):
        return 0.5

    def value(self, x):
        return (1.0 - x) ** self.a

    def derivative(self, x):
        return -self.a * (1.0 - x) ** (self.a - 1.0)

    def describe(self):
        return {"fibre": self.name, "a": self.a}


@dataclass(frozen=True)
class SmoothCounterexampleFibre(FibreMap):
    """Bounded continuous fibre map whose twist is unbounded at x = 1/2."""

    name = "smooth_counterexample"

    @property
    def singularities(self):
        return SingularitySet((Fraction(1, 2),))

    @property
    def singular_exponent(self):
        return 0.5

    @property
    def twist_constant(self):
        # |Dphi|/2 <= 1 + |2x-1|^{-1/2}/2 and dist(x, 1/2) <= 1/2
        return 1.5 / math.sqrt(2.0)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        left = x < 0.5
        r = np.sqrt(np.abs(1.0 - 2.0 * x))
        out = np.where(left, 2.0 - 2.0 * x - r, 2.0 - 2.0 * x + r)
        return out if out.ndim else float(out)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            out = -2.0 + 1.0 / np.sqrt(np.abs(1.0 - 2.0 * x))
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class CoboundaryFibre(FibreMap):
    """``phi(x) = x^{-a} - (2x mod 1)^{-a}``: unbounded, yet cohomologous to 0."""

    a: float
    name = "coboundary"

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError("exponent a must be positive")

    @property
    def singularities(self):
        return SingularitySet((0, Fraction(1, 2), 1))

    @property
    def singular_exponent(self):
        return 1.0 + self.a

    @property
    def twist_constant(self):
        return self.a / 2 + self.a * 2.0 ** (-self.a - 1.0)

    @staticmethod
    def _f(x):
        y = 2.0 * np.asarray(x, dtype=float)
        return y - (y >= 1.0)

    def value(self, x):
        out = np.asarray(x, dtype=float) ** (-self.a) - self._f(x) ** (-self.a)
        return out if out.ndim else float(out)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        out = -self.a * x ** (-self.a - 1.0) + 2.0 * self.a * self._f(x) ** (-self.a - 1.0)
        return out if out.ndim else float(out)

    def describe(self):
        return {"fibre": self.name, "a": self.a}


@dataclass(frozen=True)
class TabulatedFibre(FibreMap):
    """User-supplied fibre map from (value, derivative) evaluators."""

    value_fn: Callable
    derivative_fn: Callable
    singularities: SingularitySet = field(default_factory=lambda: SingularitySet((1,)))
    singular_exponent: float = 0.0
    twist_constant: float = math.inf
    name: str = "tabulated"

    def value(self, x):
        return self.value_fn(x)

    def derivative(self, x):
        return self.derivative_fn(x)


def coboundary_of(psi, dpsi, base: BaseMap | None = None, singularities=(1,)) -> TabulatedFibre:
    """Fibre map ``psi - psi o f`` for a C^1 function ``psi`` (a coboundary)."""
    f = base or doubling_map()

    def value(x):
        return psi(x) - psi(f(x))

    def derivative(x):
        return dpsi(x) - dpsi(f(x)) * f.derivative(x)

    return TabulatedFibre(value, derivative, SingularitySet(tuple(singularities)), name="coboundary_of")


def make_fibre(name: str, a: float | None = None) -> FibreMap:
    if name == "power":
        return PowerFibre(0.5 if a is None else a)
    if name == "coboundary":
        return CoboundaryFibre(0.5 if a is None else a)
    if name == "smooth_counterexample":
        return SmoothCounterexampleFibre()
    raise ValueError(f"unknown fibre family {name!r}")


# --------------------------------------------------------------------------
# skew-product
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SkewState:
    x: float
    u: float

    def __post_init__(self):
        object.__setattr__(self, "u", wrap(float(self.u)))


def eval_base(f: BaseMap, x):
    f.check_point(x)
    return f(x)


def eval_fibre(fib: FibreMap, x):
    if not 0 <= x <= 1:
        raise DomainError(f"x={x!r} lies outside [0, 1]", point=x)
    if x in fib.singularities:
        raise SingularityError(f"x={x!r} is a singular point of the {fib.name} fibre", point=x)
    return fib.value(float(x))


def eval_skew(f: BaseMap, fib: FibreMap, z: SkewState) -> SkewState:
    phi = eval_fibre(fib, z.x)
    return SkewState(eval_base(f, z.x), z.u + phi)


def twist_ratio(fib: FibreMap, f: BaseMap, x) -> float:
    """``|Dphi(x)| / |Df(x)|``.

    Interior breakpoints are accepted when both one-sided slopes of ``f``
    have the same magnitude, since the ratio is then well defined.
    """
    inner = f.breakpoints[1:-1]
    if x in inner:
        i = inner.index(x)
        if abs(f.slopes[i]) != abs(f.slopes[i + 1]):
            raise DomainError(f"|Df| jumps at the breakpoint {x!r}", point=x)
    else:
        f.check_point(x)
    if x in fib.singularities:
        raise SingularityError(f"x={x!r} is a singular point of the {fib.name} fibre", point=x)
    return abs(fib.derivative(float(x))) / abs(f.derivative(x))


# --------------------------------------------------------------------------
# plain-text configuration
# --------------------------------------------------------------------------


def parse_config(text: str) -> dict:
    """Parse ``key=value`` lines (``#`` comments, blank lines ignored)."""
    out = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed config line: {raw!r}")
        key, val = (p.strip() for p in line.split("=", 1))
        out[key] = val
    return out


def load_config(source) -> tuple[BaseMap, FibreMap, SingularitySet]:
    """Build (map, fibre, singularity set) from a config file path or dict."""
    cfg = source if isinstance(source, dict) else parse_config(Path(source).read_text())
    unknown = set(cfg) - {"map", "fibre", "a", "singularities"}
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if cfg.get("map", "doubling") != "doubling":
        raise ValueError(f"unsupported map {cfg['map']!r}; only 'doubling' is available")
    a = float(cfg["a"]) if "a" in cfg else None
    fib = make_fibre(cfg.get("fibre", "power"), a)
    S = fib.singularities
    if cfg.get("singularities"):
        S = SingularitySet(tuple(Fraction(p.strip()) for p in cfg["singularities"].split(",")))
    return doubling_map(), fib, S


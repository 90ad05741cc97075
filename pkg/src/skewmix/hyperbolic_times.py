"""(b, sigma, delta)-hyperbolic times: pointwise certification and grid measures."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import BaseMap, SingularitySet, dist_trunc
from .errors import DomainError
from .orbits import grid_points

__all__ = [
    "HypTimeParams",
    "is_hyperbolic_time",
    "first_hyperbolic_time",
    "hyperbolic_time_mask",
    "hyperbolic_fraction",
    "CellCertificate",
    "certify_cells",
]

# slack on the derivative-product inequality, for non-dyadic rounding only
_PRODUCT_RTOL = 1e-12


@dataclass(frozen=True)
class HypTimeParams:
    b: float = 1.5
    sigma: float = 0.5
    delta: float = 0.25

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError("b must be positive")
        if not 0 < self.sigma < 1:
            raise ValueError("sigma must lie in (0, 1)")
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    def certifies_doubling_scheme(self) -> bool:
        """Whether these parameters fall in the range where the doubling scheme is certified."""
        return self.b > 1 and self.delta <= 0.25 and self.sigma == 0.5


def _orbit_checked(f: BaseMap, S: SingularitySet, x, n: int) -> list:
    pts = []
    for j in range(n):
        f.check_point(x, iterate=j)
        if x in S:
            raise DomainError(f"orbit hits the singular point {x!r} at iterate {j}", point=x, iterate=j)
        pts.append(x)
        x = f(x)
    return pts


def _check_orbit(f, S, pts, p, n) -> bool:
    inv = 1.0
    for k in range(1, n + 1):
        xk = pts[n - k]
        inv /= abs(f.derivative(xk))
        if inv > p.sigma**k * (1 + _PRODUCT_RTOL):
            return False
        if dist_trunc(S, p.delta, float(xk)) < p.sigma ** (p.b * k):
            return False
    return True


def is_hyperbolic_time(f: BaseMap, S: SingularitySet, p: HypTimeParams, x, n: int) -> bool:
    """True iff ``n`` is a (b, sigma, delta)-hyperbolic time for ``x``.

    Both inequalities are checked for every ``k = 1..n``: the backward
    product of inverse derivatives is at most ``sigma^k`` and the truncated
    distance of ``f^{n-k} x`` to ``S`` is at least ``sigma^{b k}``.
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    pts = _orbit_checked(f, S, x, n)
    return _check_orbit(f, S, pts, p, n)


def first_hyperbolic_time(f: BaseMap, S: SingularitySet, p: HypTimeParams, x, n_max: int):
    """Smallest hyperbolic time ``n <= n_max`` for ``x``, or None."""
    if n_max < 1:
        return None
    pts = _orbit_checked(f, S, x, n_max)
    for n in range(1, n_max + 1):
        if _check_orbit(f, S, pts[:n], p, n):
            return n
    return None


def hyperbolic_time_mask(f: BaseMap, S: SingularitySet, p: HypTimeParams, xs: np.ndarray, n: int) -> np.ndarray:
    """Vectorised ``is_hyperbolic_time`` without domain checks.

    Orbits are iterated in double precision, which is exact for the doubling
    map up to ~50 iterates.
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    orbit = f.orbit(np.asarray(xs, dtype=float), n)
    ok = np.ones(orbit.shape[1], dtype=bool)
    inv = np.ones(orbit.shape[1])
    for k in range(1, n + 1):
        xk = orbit[n - k]
        inv = inv / np.abs(f.derivative(xk))
        ok &= inv <= p.sigma**k * (1 + _PRODUCT_RTOL)
        ok &= dist_trunc(S, p.delta, xk) >= p.sigma ** (p.b * k)
    return ok


def hyperbolic_fraction(f: BaseMap, S: SingularitySet, p: HypTimeParams, n: int, grid_size: int) -> float:
    """Fraction of an offset uniform grid on [0, 1] lying in H_n(b, sigma, delta)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if grid_size < 1:
        raise ValueError("grid_size must be >= 1")
    return float(hyperbolic_time_mask(f, S, p, grid_points(grid_size), n).mean())


@dataclass(frozen=True)
class CellCertificate:
    cell: int
    points: int
    passed: int
    failed: int
    distance_bound_ok: bool
    min_distance_ratio: float  # min over points and k < l of dist(f^{l-k} x, S) / 2^{-(k+1)}


def certify_cells(scheme, f: BaseMap, S: SingularitySet, p: HypTimeParams, l_max: int, points: int = 1000) -> list[CellCertificate]:
    """Check that the return time ``l`` is a hyperbolic time on sampled points of each ``Y_l``.

    Also checks the geometric bound ``dist(f^{l-k} x, S) >= 2^{-(k+1)}`` for
    ``1 <= k < l`` along the way.
    """
    out = []
    for l in range(1, l_max + 1):
        scheme.check_level(l)
        xs = scheme.sample_cell(l, points)
        ok = hyperbolic_time_mask(f, S, p, xs, l)
        orbit = f.orbit(xs, l)
        ratio = np.inf
        for k in range(1, l):
            ratio = min(ratio, float(np.min(S.dist(orbit[l - k]) * 2.0 ** (k + 1))))
        out.append(CellCertificate(l, points, int(ok.sum()), int((~ok).sum()), bool(ratio >= 1.0), ratio))
    return out

"""Explicit first-return inducing scheme for the doubling map and its tower.

Base ``Y = (0, 1/2)``, cells ``Y_l = (a_l, a_{l+1})`` with
``a_l = 1/2 - 2^{-l}``, return time ``R = l`` on ``Y_l``.  The induced map
``F = f^l`` is the affine bijection ``x -> 2^l x - (2^{l-1} - 1)`` of
``Y_l`` onto ``Y``.  Only cells ``l <= L`` are kept; the discarded mass is
reported as the truncation deficit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .dynamics import BaseMap, FibreMap, SkewState, wrap
from .errors import DomainError, SingularityError, TruncationError
from .orbits import GOLDEN_OFFSET

__all__ = [
    "InducedScheme",
    "TowerPoint",
    "locate_cell",
    "induced_map",
    "inverse_branch",
    "induced_fibre",
    "induced_twist",
    "tower_step",
    "project",
    "tower_step_many",
    "project_many",
    "twist_control_bound",
    "twist_suprema",
    "tail_partial_sum",
    "young_structure_defects",
]

HALF = Fraction(1, 2)


@dataclass(frozen=True)
class InducedScheme:
    L: int = 40

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("truncation level L must be positive")

    @property
    def base(self) -> tuple:
        return (0, HALF)

    @staticmethod
    def boundary(l: int) -> Fraction:
        return HALF - Fraction(1, 2**l)

    def cell(self, l: int) -> tuple[Fraction, Fraction]:
        return self.boundary(l), self.boundary(l + 1)

    @staticmethod
    def return_time(l: int) -> int:
        return l

    @staticmethod
    def cell_length(l: int) -> float:
        return 2.0 ** -(l + 1)

    @staticmethod
    def cell_measure(l: int) -> float:
        """Measure of ``Y_l`` under normalised Lebesgue measure on ``Y``."""
        return 2.0**-l

    @property
    def truncation_deficit(self) -> float:
        """Lebesgue measure of ``Y`` not covered by cells ``l <= L``."""
        return 2.0 ** -(self.L + 1)

    def check_level(self, l: int) -> None:
        if l < 1:
            raise ValueError(f"cell index must be positive, got {l}")
        if l > self.L:
            raise TruncationError(f"cell {l} exceeds the truncation level L={self.L}")

    @staticmethod
    def branch_map(l: int, x):
        """``F`` on the closure of ``Y_l``: ``2^l x - (2^{l-1} - 1)``."""
        return 2**l * x - (2 ** (l - 1) - 1)

    def cells_of(self, xs: np.ndarray) -> np.ndarray:
        """Vectorised cell index; 0 for boundary points or points outside ``Y``."""
        xs = np.asarray(xs, dtype=float)
        m, e = np.frexp(0.5 - xs)
        l = -e
        bad = (xs <= 0) | (xs >= 0.5) | (m == 0.5)
        return np.where(bad, 0, l)

    def sample_cell(self, l: int, m: int) -> np.ndarray:
        """``m`` interior points of ``Y_l`` on an irrationally offset grid."""
        a = float(self.boundary(l))
        return a + (np.arange(m) + GOLDEN_OFFSET) / m * self.cell_length(l)

    def describe(self) -> dict:
        cells = []
        for l in range(1, self.L + 1):
            lo, hi = self.cell(l)
            cells.append(
                {
                    "cell": l,
                    "left": float(lo),
                    "right": float(hi),
                    "return_time": self.return_time(l),
                    "length": self.cell_length(l),
                    "measure": self.cell_measure(l),
                }
            )
        return {
            "base": [0.0, 0.5],
            "truncation_level": self.L,
            "boundaries": [float(self.boundary(l)) for l in range(1, self.L + 2)],
            "cells": cells,
            "truncation_deficit": self.truncation_deficit,
            "truncation_deficit_normalized": 2.0**-self.L,
        }


def locate_cell(scheme: InducedScheme, x) -> int:
    """Index ``l`` with ``x`` in ``Y_l``; exact for floats and Fractions."""
    d = HALF - Fraction(x)
    if not 0 < d < HALF:
        raise DomainError(f"x={x!r} lies outside Y = (0, 1/2)", point=x)
    k = 1 / d
    t = k.numerator.bit_length() - k.denominator.bit_length()
    if Fraction(2) ** t > k:
        t -= 1
    if Fraction(2) ** t == k:
        raise DomainError(f"x={x!r} is the cell boundary a_{t}", point=x)
    scheme.check_level(t)
    return t


def inverse_branch(scheme: InducedScheme, l: int, y):
    """``xi_l(y) = y 2^{-l} + 1/2 - 2^{-l}``, the inverse of ``F`` on ``Y_l``."""
    scheme.check_level(l)
    if not 0 <= y <= HALF:
        raise DomainError(f"y={y!r} lies outside the closure of Y", point=y)
    if isinstance(y, (Fraction, int)):
        return Fraction(y) / 2**l + HALF - Fraction(1, 2**l)
    return y * 2.0**-l + (0.5 - 2.0**-l)


def _orbit(f: BaseMap, fib: FibreMap | None, x, n: int):
    pts = []
    for j in range(n):
        f.check_point(x, iterate=j)
        if fib is not None and x in fib.singularities:
            raise SingularityError(f"orbit hits the singular point {x!r} at iterate {j}", point=x, iterate=j)
        pts.append(x)
        x = f(x)
    return pts, x


def induced_map(scheme: InducedScheme, f: BaseMap, x):
    """``F(x) = f^{R(x)} x``, computed by iterating the base map."""
    l = locate_cell(scheme, x)
    return _orbit(f, None, x, l)[1]


def induced_fibre(scheme: InducedScheme, f: BaseMap, fib: FibreMap, x) -> float:
    """Real lift of ``Phi(x) = sum_{k < R(x)} phi(f^k x)``."""
    l = locate_cell(scheme, x)
    pts, _ = _orbit(f, fib, x, l)
    return float(sum(fib.value(float(p)) for p in pts))


def induced_twist(scheme: InducedScheme, f: BaseMap, fib: FibreMap, x) -> float:
    """``DPhi(x) / DF(x) = sum_j Dphi(f^j x) / Df^{l-j}(f^j x)`` (signed)."""
    l = locate_cell(scheme, x)
    pts, _ = _orbit(f, fib, x, l)
    total, inv = 0.0, 1.0
    for p in reversed(pts):
        inv /= f.derivative(p)
        total += fib.derivative(float(p)) * inv
    return total


def twist_control_bound(C: float, sigma: float, b: float, s: float) -> float:
    """Geometric-sum bound ``C / (1 - sigma^{1 - b s})`` on the induced twist."""
    if not b * s < 1:
        raise ValueError(f"need b*s < 1, got b={b}, s={s}")
    return C / (1.0 - sigma ** (1.0 - b * s))


def twist_suprema(scheme: InducedScheme, f: BaseMap, fib: FibreMap, l_max: int, points: int = 1000) -> np.ndarray:
    """Per-cell sup of ``|DPhi / DF|`` over ``points`` interior samples, cells 1..l_max."""
    sups = np.empty(l_max)
    for l in range(1, l_max + 1):
        scheme.check_level(l)
        orbit = f.orbit(scheme.sample_cell(l, points), l)
        total = np.zeros(points)
        inv = np.ones(points)
        for p in orbit[::-1]:
            inv = inv / f.derivative(p)
            total += fib.derivative(p) * inv
        sups[l - 1] = np.max(np.abs(total))
    return sups


def tail_partial_sum(sigma0: float, L: int) -> float:
    """``sum_{l <= L} mu_Y(Y_l) e^{sigma0 R_l}`` with ``mu_Y(Y_l) = 2^{-l}``."""
    r = math.exp(sigma0) / 2.0
    return math.fsum(r**l for l in range(1, L + 1))


def young_structure_defects(scheme: InducedScheme, f: BaseMap, points: int = 64) -> dict:
    """Largest violations of the Markov, measure, expansion, distortion and C^1 laws.

    Every entry is 0 for an exact scheme, except ``expansion_min`` and
    ``c1_max`` which report the smallest ``DF`` over ``2^l`` and the largest
    slope of ``f^k o xi_l``.
    """
    markov = measure = expansion = distortion = 0.0
    expansion_min, c1_max = math.inf, 0.0
    for l in range(1, scheme.L + 1):
        lo, hi = scheme.cell(l)
        markov = max(markov, abs(scheme.branch_map(l, float(lo)) - 0.0), abs(scheme.branch_map(l, float(hi)) - 0.5))
        measure = max(measure, abs((hi - lo) / HALF - Fraction(1, 2**l)))
        xs = scheme.sample_cell(l, points)
        orbit = f.orbit(xs, l)
        DF = np.prod([f.derivative(p) for p in orbit], axis=0)
        expansion = max(expansion, float(np.max(np.abs(DF - 2.0**l))))
        expansion_min = min(expansion_min, float(np.min(np.abs(DF))))
        logJ = -np.log(np.abs(DF))
        ys = scheme.branch_map(l, xs)
        distortion = max(distortion, float(np.max(np.abs(np.diff(logJ) / np.diff(ys)))))
        slope = 2.0**-l
        for p in orbit:
            c1_max = max(c1_max, slope)
            slope = slope * float(np.max(np.abs(f.derivative(p))))
        c1_max = max(c1_max, slope)
    return {
        "markov": markov,
        "measure": float(measure),
        "expansion": expansion,
        "expansion_min": expansion_min,
        "distortion": distortion,
        "c1_max": c1_max,
    }


# --------------------------------------------------------------------------
# tower dynamics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TowerPoint:
    x: float
    level: int
    u: float = 0.0

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("tower level must be nonnegative")
        object.__setattr__(self, "u", wrap(float(self.u)))


def _check_tower_point(scheme, p: TowerPoint) -> int:
    l = locate_cell(scheme, p.x)
    if p.level >= scheme.return_time(l):
        raise ValueError(f"level {p.level} is not below the return time R={l} of x={p.x!r}")
    return l


def tower_step(scheme: InducedScheme, f: BaseMap, fib: FibreMap, p: TowerPoint) -> TowerPoint:
    """One step of the tower skew-product; the fibre moves only at the top."""
    R = _check_tower_point(scheme, p)
    if p.level + 1 < R:
        return TowerPoint(p.x, p.level + 1, p.u)
    Fx = induced_map(scheme, f, p.x)
    return TowerPoint(Fx, 0, p.u + induced_fibre(scheme, f, fib, p.x))


def project(scheme: InducedScheme, f: BaseMap, fib: FibreMap, p: TowerPoint) -> SkewState:
    """``(x, l, u) -> (f^l x, u + S_l phi(x))``."""
    _check_tower_point(scheme, p)
    pts, fx = _orbit(f, fib, p.x, p.level)
    return SkewState(fx, p.u + sum(fib.value(float(q)) for q in pts))


# --------------------------------------------------------------------------
# vectorised tower dynamics
# --------------------------------------------------------------------------


def _check_tower_arrays(scheme, x, level):
    x = np.asarray(x, dtype=float)
    level = np.asarray(level, dtype=np.int64)
    l = scheme.cells_of(x)
    if np.any(l == 0):
        raise DomainError("points must lie in the interior of a cell of Y")
    if np.any(l > scheme.L):
        raise TruncationError(f"points fall in cells beyond L={scheme.L}")
    if np.any((level < 0) | (level >= l)):
        raise ValueError("levels must satisfy 0 <= level < return time")
    return x, level, l


def _masked_sums(f, fib, x, steps):
    """``(f^steps x, S_steps phi(x))`` with a per-point step count."""
    total = np.zeros_like(x)
    pts = x.copy()
    sing = np.asarray(fib.singularities._arr, dtype=float)
    for j in range(int(steps.max(initial=0))):
        live = j < steps
        if np.any(live & np.isin(pts, sing)):
            raise SingularityError(f"an orbit hits a singular point at iterate {j}", iterate=j)
        total += np.where(live, fib.value(pts), 0.0)
        pts = np.where(live, f(pts), pts)
    return pts, total


def tower_step_many(scheme: InducedScheme, f: BaseMap, fib: FibreMap, x, level, u):
    """Array form of :func:`tower_step`; returns ``(x, level, u)``."""
    x, level, l = _check_tower_arrays(scheme, x, level)
    top = level + 1 == l
    Fx, Phi = _masked_sums(f, fib, x, np.where(top, l, 0))
    return np.where(top, Fx, x), np.where(top, 0, level + 1), wrap(np.asarray(u, dtype=float) + Phi)


def project_many(scheme: InducedScheme, f: BaseMap, fib: FibreMap, x, level, u):
    """Array form of :func:`project`; returns ``(x, u)``."""
    x, level, _ = _check_tower_arrays(scheme, x, level)
    fx, S = _masked_sums(f, fib, x, level)
    return fx, wrap(np.asarray(u, dtype=float) + S)

"""Periodic-orbit obstruction to Phi being cohomologous to a locally constant function.

If ``Phi - psi + psi o F`` were constant on each cell, then for fixed points
``x in Y_n``, ``x' in Y_m`` and a 2-cycle ``y in Y_n``, ``y' = F y in Y_m``
one would have ``Phi(x) + Phi(x') = Phi(y) + Phi(y')``.  A nonzero value of
the difference certifies that no such ``psi`` exists; a zero value proves
nothing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable

from .dynamics import BaseMap, FibreMap, make_fibre
from .errors import SingularityError
from .tower import InducedScheme

__all__ = [
    "PeriodicTriple",
    "find_periodic_triple",
    "fixed_point",
    "obstruction",
    "chi",
    "ObstructionRow",
    "uni_scan",
    "INCONCLUSIVE_TOL",
]

INCONCLUSIVE_TOL = 1e-9


def _shift(l: int) -> int:
    return 2 ** (l - 1) - 1


def fixed_point(l: int) -> Fraction:
    """Fixed point of ``F`` in the closure of ``Y_l``: ``(2^{l-1} - 1) / (2^l - 1)``."""
    return Fraction(_shift(l), 2**l - 1)


@dataclass(frozen=True)
class PeriodicTriple:
    cells: tuple[int, int]
    fp_n: Fraction
    fp_m: Fraction
    cycle: tuple[Fraction, Fraction]


def find_periodic_triple(scheme: InducedScheme, n: int, m: int) -> PeriodicTriple:
    """Fixed points of ``F`` in cells ``n`` and ``m`` and the 2-cycle visiting ``n`` then ``m``.

    Solved exactly in rationals from the affine branches of ``F``.
    """
    if n == m:
        raise ValueError("cells must differ")
    scheme.check_level(n)
    scheme.check_level(m)
    y = Fraction(2**m * _shift(n) + _shift(m), 2 ** (n + m) - 1)
    y2 = scheme.branch_map(n, y)
    return PeriodicTriple((n, m), fixed_point(n), fixed_point(m), (y, y2))


def _birkhoff(f: BaseMap, fib: FibreMap, x: Fraction, n: int) -> float:
    # exact rational orbit; the fibre is evaluated in double precision
    terms = []
    for j in range(n):
        if x in fib.singularities:
            raise SingularityError(
                f"periodic orbit passes through the singular point {x} of the {fib.name} fibre",
                point=x,
                iterate=j,
            )
        terms.append(fib.value(float(x)))
        x = f(x)
    return math.fsum(terms)


def obstruction(scheme: InducedScheme, f: BaseMap, fib: FibreMap, t: PeriodicTriple) -> float:
    """``Phi(fp_n) + Phi(fp_m) - Phi(y) - Phi(y')`` in the real lift."""
    n, m = t.cells
    return (
        _birkhoff(f, fib, t.fp_n, n)
        + _birkhoff(f, fib, t.fp_m, m)
        - _birkhoff(f, fib, t.cycle[0], n)
        - _birkhoff(f, fib, t.cycle[1], m)
    )


def chi(a: float) -> float:
    """``1 + (2/3)^a + (1/3)^a - (6/7)^a - (5/7)^a - (3/7)^a``."""
    if not 0 <= a <= 1:
        raise ValueError("a must lie in [0, 1]")
    return math.fsum([1.0, (2 / 3) ** a, (1 / 3) ** a, -((6 / 7) ** a), -((5 / 7) ** a), -((3 / 7) ** a)])


@dataclass(frozen=True)
class ObstructionRow:
    a: float | None
    n: int
    m: int
    value: float  # nan when the orbit meets a singularity
    status: str  # "certified", "inconclusive" or "singular"


def uni_scan(
    scheme: InducedScheme,
    f: BaseMap,
    fib_family: str | Callable[[float], FibreMap],
    a_grid: Iterable[float | None],
    cell_pairs: Iterable[tuple[int, int]],
) -> list[ObstructionRow]:
    """Obstruction values over a grid of exponents and cell pairs.

    ``fib_family`` is a family name (see ``make_fibre``) or a callable
    ``a -> FibreMap``.  Values below ``INCONCLUSIVE_TOL`` in magnitude are
    flagged inconclusive; orbits through a singularity are flagged singular.
    """
    a_grid = list(a_grid)
    cell_pairs = list(cell_pairs)
    if not a_grid or not cell_pairs:
        raise ValueError("a_grid and cell_pairs must be nonempty")
    make = fib_family if callable(fib_family) else (lambda a: make_fibre(fib_family, a))
    rows = []
    for a in a_grid:
        fib = make(a)
        for n, m in cell_pairs:
            t = find_periodic_triple(scheme, n, m)
            try:
                v = obstruction(scheme, f, fib, t)
            except SingularityError:
                rows.append(ObstructionRow(a, n, m, math.nan, "singular"))
                continue
            status = "inconclusive" if abs(v) < INCONCLUSIVE_TOL else "certified"
            rows.append(ObstructionRow(a, n, m, v, status))
    return rows

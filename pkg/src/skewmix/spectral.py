"""Ulam discretisation of the twisted transfer operators of the induced map.

For Fourier mode ``k`` of the fibre the induced operator acts on functions
on ``Y = (0, 1/2)`` by::

    M_k h(x) = sum_l 2^{-l} exp(-2 pi i k Phi(xi_l x)) h(xi_l x)

with ``xi_l`` the affine inverse branch onto ``Y_l``.  The circle is R/Z,
so characters are ``exp(2 pi i k u)``.  Projecting onto piecewise constants
on ``N`` uniform cells gives an ``N x N`` matrix whose entry ``(i, j)`` is
the average over target cell ``j`` of the weight carried into source cell
``i``; the operator on coefficient vectors is its transpose.  Since
``xi_l`` is affine the cell overlaps are exact and only the weight is
integrated (``q``-point midpoint rule per overlap piece).
"""
from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .dynamics import BaseMap, FibreMap
from .errors import ConvergenceError, TruncationError
from .tower import InducedScheme

__all__ = [
    "UlamOperator",
    "RenewalBlock",
    "SpectralEstimate",
    "build_ulam",
    "spectral_radius",
    "mode_decay_table",
    "renewal_block",
    "tail_block",
    "compositions",
    "renewal_matrices",
    "verify_renewal",
    "renewal_mass_balance",
    "dump_matrix",
    "load_matrix",
]

TWO_PI = 2.0 * math.pi


def _branch_fibre(f: BaseMap, fib: FibreMap, xs: np.ndarray, l: int) -> np.ndarray:
    """``Phi`` at points of ``Y_l`` (orbit of length ``l`` in double precision)."""
    total = np.zeros_like(xs)
    x = xs
    for _ in range(l):
        total += fib.value(x)
        x = f(x)
    return total


def _weight(k: int, phi: np.ndarray) -> np.ndarray:
    theta = TWO_PI * k * phi
    return np.cos(theta) - 1j * np.sin(theta)


def _xi(l: int, y):
    return y * 2.0**-l + (0.5 - 2.0**-l)


def _branch_entries(f, fib, l: int, k: int, N: int, q: int):
    """COO triplets of the Ulam block for branch ``l``."""
    h = 0.5 / N
    j = np.arange(N)
    a = 0.5 - 2.0**-l
    left = a + j * h * 2.0**-l
    right = a + (j + 1) * h * 2.0**-l
    i0 = np.minimum(np.floor(left / h).astype(np.int64), N - 1)
    b = (i0 + 1) * h
    split = right > b
    y_b = np.where(split, (b - a) * 2.0**l, (j + 1) * h)
    t = (np.arange(q) + 0.5) / q
    rows, cols, vals = [], [], []
    for lo, hi, ii in ((j * h, y_b, i0), (y_b, (j + 1) * h, i0 + 1)):
        keep = hi > lo
        if not keep.any():
            continue
        lo, hi, ii, jj = lo[keep], hi[keep], ii[keep], j[keep]
        nodes = lo[:, None] + (hi - lo)[:, None] * t[None, :]
        if k == 0:
            w = np.ones(len(lo), dtype=complex)
        else:
            w = _weight(k, _branch_fibre(f, fib, _xi(l, nodes), l)).mean(axis=1)
        rows.append(ii)
        cols.append(jj)
        vals.append(2.0**-l * (hi - lo) / h * w)
    return rows, cols, vals


def _assemble(parts, N):
    rows = np.concatenate([r for p in parts for r in p[0]])
    cols = np.concatenate([c for p in parts for c in p[1]])
    vals = np.concatenate([v for p in parts for v in p[2]])
    return sp.csr_matrix((vals, (rows, cols)), shape=(N, N), dtype=complex)


@dataclass(frozen=True, eq=False)
class UlamOperator:
    k: int
    N: int
    L: int
    q: int
    matrix: sp.csr_matrix

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def apply(self, h: np.ndarray) -> np.ndarray:
        return self.matrix.T @ h

    def column_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=0)).ravel()


def _check_sizes(N, q):
    if N < 1 or q < 1:
        raise ValueError(f"need N >= 1 and q >= 1, got N={N}, q={q}")


def build_ulam(scheme: InducedScheme, f: BaseMap, fib: FibreMap, k: int, N: int, q: int = 8) -> UlamOperator:
    """Ulam matrix of the mode-``k`` twisted induced operator on ``N`` cells of ``Y``."""
    _check_sizes(N, q)
    parts = [_branch_entries(f, fib, l, k, N, q) for l in range(1, scheme.L + 1)]
    return UlamOperator(k, N, scheme.L, q, _assemble(parts, N))


@dataclass(frozen=True)
class SpectralEstimate:
    radius: float
    eigenvalue: complex
    residual: float
    iterations: int


def spectral_radius(op, tol: float = 1e-12, max_iter: int = 20000) -> SpectralEstimate:
    """Dominant eigenvalue modulus by power iteration with renormalisation every step.

    ``op`` is an ``UlamOperator`` (its coefficient action is used) or any
    square matrix.  Stops when ``||A v - lambda v|| < tol`` for the unit
    iterate ``v`` and Rayleigh quotient ``lambda``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = op.matrix.T.tocsr() if isinstance(op, UlamOperator) else op
    n = A.shape[0]
    v = np.linspace(1.0, 2.0, n).astype(complex)
    v /= np.linalg.norm(v)
    lam, res = 0j, math.inf
    for it in range(1, max_iter + 1):
        w = A @ v
        lam = np.vdot(v, w)
        res = float(np.linalg.norm(w - lam * v))
        if res < tol:
            return SpectralEstimate(float(abs(lam)), complex(lam), res, it)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return SpectralEstimate(0.0, 0j, 0.0, it)
        v = w / nw
    raise ConvergenceError(
        f"power iteration did not reach residual {tol:g} in {max_iter} steps (last {res:.3g})",
        estimate=complex(lam),
        residual=res,
        iterations=max_iter,
    )


def mode_decay_table(scheme, f, fib, k_max: int, N: int, q: int = 8, tol: float = 1e-12) -> list[dict]:
    """Spectral radius of the Ulam operator for every mode ``-k_max..k_max``."""
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    rows = []
    for k in range(-k_max, k_max + 1):
        est = spectral_radius(build_ulam(scheme, f, fib, k, N, q), tol=tol)
        rows.append({"k": k, "radius": est.radius, "residual": est.residual, "N": N, "L": scheme.L})
    return rows


# --------------------------------------------------------------------------
# renewal decomposition
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RenewalBlock:
    """First-return block ``R_{n,k}``: branch ``n`` only, Jacobian ``2^{-n}``."""

    n: int
    k: int
    N: int
    matrix: sp.csr_matrix
    f: BaseMap = field(repr=False)
    fib: FibreMap = field(repr=False)

    def pull(self, x: np.ndarray):
        """Pointwise action data: ``R h(x) = weight * h(preimage)``."""
        y = _xi(self.n, x)
        return y, 2.0**-self.n * _weight(self.k, _branch_fibre(self.f, self.fib, y, self.n))


def renewal_block(scheme: InducedScheme, f: BaseMap, fib: FibreMap, n: int, k: int, N: int, q: int = 8) -> RenewalBlock:
    if n > scheme.L:
        raise TruncationError(f"return time {n} exceeds the truncation level L={scheme.L}")
    scheme.check_level(n)
    _check_sizes(N, q)
    return RenewalBlock(n, k, N, _assemble([_branch_entries(f, fib, n, k, N, q)], N), f, fib)


def tail_block(scheme: InducedScheme, n: int, N: int, k: int = 0) -> sp.csr_matrix:
    """Ulam block of ``A_{n,k}``: mass of ``Y`` still climbing the tower at level ``n``.

    Below the top of the tower the base point and fibre do not move, so the
    block is the diagonal multiplication by ``1[n < R <= L]`` for every ``k``.
    """
    _check_sizes(N, 1)
    h = 0.5 / N
    lo = np.arange(N) * h
    hi = lo + h
    a, b = 0.5 - 2.0 ** -(n + 1), 0.5 - 2.0 ** -(scheme.L + 1)
    if n >= scheme.L:
        frac = np.zeros(N)
    else:
        frac = np.clip(np.minimum(hi, b) - np.maximum(lo, a), 0.0, None) / h
    return sp.diags(frac.astype(complex), format="csr")


def compositions(n: int, max_part: int | None = None):
    """All ordered tuples of positive integers summing to ``n``."""
    max_part = n if max_part is None else max_part
    for cuts in itertools.product((0, 1), repeat=n - 1):
        parts, run = [], 1
        for c in cuts:
            if c:
                parts.append(run)
                run = 1
            else:
                run += 1
        parts.append(run)
        if max(parts) <= max_part:
            yield tuple(parts)


def _nodes(N: int, q: int):
    h = 0.5 / N
    t = (np.arange(q) + 0.5) / q
    x = ((np.arange(N)[:, None] + t[None, :]) * h).ravel()
    return x, np.repeat(np.arange(N), q), h


def _scatter(points, weights, cols, N, q, h):
    rows = np.minimum(np.floor(points / h).astype(np.int64), N - 1)
    out = np.zeros((N, N), dtype=complex)
    np.add.at(out, (rows, cols), weights / q)
    return out


def _word_offset(word) -> Fraction:
    # xi_{j1} o xi_{j2} o ... o xi_{jp} (x) = 2^{-n} x + offset
    off, scale = Fraction(0), Fraction(1)
    for j in word:
        off += scale * (Fraction(1, 2) - Fraction(1, 2**j))
        scale /= 2**j
    return off


def renewal_matrices(scheme, f: BaseMap, fib: FibreMap, n: int, k: int, N: int, q: int = 4):
    """``T_{n,k}`` tested against the Ulam cell indicators, by two routes.

    Direct: each return word of total length ``n`` contributes its composed
    affine branch, Jacobian ``2^{-n}`` and the base-map Birkhoff sum
    ``S_n phi`` along the preimage.  Convolution: the displayed sum of
    products ``R_{j1} ... R_{jp}`` evaluated by chaining the blocks'
    pointwise actions.  Operators are composed before projection, so the two
    matrices agree up to rounding.
    """
    if n > scheme.L:
        raise TruncationError(f"n={n} exceeds the truncation level L={scheme.L}")
    x, cols, h = _nodes(N, q)
    words = list(compositions(n, scheme.L))

    direct = np.zeros((N, N), dtype=complex)
    for word in words:
        z = x * 2.0**-n + float(_word_offset(word))
        orbit = f.orbit(z, n)
        returns = np.cumsum(word)[:-1]
        in_y = (orbit > 0) & (orbit < 0.5)
        expected = np.zeros(n, dtype=bool)
        expected[0] = True
        expected[returns] = True
        if not np.array_equal(in_y, np.broadcast_to(expected[:, None], in_y.shape)):
            raise ArithmeticError(f"word {word} does not follow the first-return structure")
        phi = fib.value(orbit).sum(axis=0)
        direct += _scatter(z, 2.0**-n * _weight(k, phi), cols, N, q, h)

    blocks = {j: renewal_block(scheme, f, fib, j, k, N, q) for j in range(1, n + 1)}
    conv = np.zeros((N, N), dtype=complex)
    for word in words:
        pt, wt = x, np.ones_like(x, dtype=complex)
        for j in word:
            pt, w = blocks[j].pull(pt)
            wt = wt * w
        conv += _scatter(pt, wt, cols, N, q, h)
    return direct, conv


def verify_renewal(scheme, f: BaseMap, fib: FibreMap, n: int, k: int, N: int, q: int = 4) -> float:
    """Max entrywise deviation between the direct and convolution forms of ``T_{n,k}``."""
    if n > 8:
        raise ValueError("n must be <= 8 (the word count grows like 2^(n-1))")
    direct, conv = renewal_matrices(scheme, f, fib, n, k, N, q)
    return float(np.max(np.abs(direct - conv)))


def renewal_mass_balance(scheme: InducedScheme, n: int, N: int = 64) -> float:
    """``|1 - (returned + in flight + truncated mass)|`` after ``n`` tower steps, mode 0.

    Returned mass ``u_i`` counts return words (mass of ``T_i 1``), in-flight
    mass comes from the tail blocks ``A_a`` and truncated mass from cells
    beyond ``L``.
    """
    u = [1.0] + [
        math.fsum(2.0**-i for _ in compositions(i, scheme.L)) for i in range(1, n + 1)
    ]
    in_flight = math.fsum(
        u[i] * tail_block(scheme, n - i, N).diagonal().real.mean() for i in range(n)
    )
    lost = 2.0**-scheme.L * math.fsum(u[:n])
    return abs(1.0 - (u[n] + in_flight + lost))


# --------------------------------------------------------------------------
# binary matrix dump
# --------------------------------------------------------------------------

_MAGIC = b"SKWULAM1"
_HEADER = struct.Struct("<8sqqq")


def dump_matrix(op: UlamOperator, path) -> None:
    """Write ``op`` as: 8-byte magic, int64 N, k, L (little-endian), then N*N
    complex entries row-major as (re, im) float64 pairs."""
    data = np.ascontiguousarray(op.dense(), dtype="<c16")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, op.N, op.k, op.L))
        fh.write(data.tobytes(order="C"))


def load_matrix(path) -> tuple[int, int, int, np.ndarray]:
    """Inverse of ``dump_matrix``: returns ``(N, k, L, matrix)``."""
    raw = Path(path).read_bytes()
    magic, N, k, L = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError("not a skewmix Ulam matrix file")
    body = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size)
    if body.size != N * N:
        raise ValueError("matrix file is truncated")
    return N, k, L, body.reshape(N, N).copy()

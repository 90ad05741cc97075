"""Exact doubling-map orbits via binary expansions.

In double precision ``2x mod 1`` is exact but the orbit of a float collapses
to 0 after ~53 steps, because the float only carries 53 bits.  Here a point
is a row of 64-bit words holding its binary expansion; ``f^n x`` is the
53-bit window starting at bit ``n``.  Random rows give Lebesgue-distributed
points with as many exact iterates as the row has spare bits.
"""
from __future__ import annotations

import math

import numpy as np

_U64 = np.uint64
GOLDEN_OFFSET = (math.sqrt(5.0) - 1.0) / 4.0  # half the golden-mean fractional part


def words_needed(n_max: int) -> int:
    """Words per row so that windows up to ``f^{n_max}`` are exact."""
    return n_max // 64 + 2


def window(words: np.ndarray, n: int) -> np.ndarray:
    """Float values of ``f^n x`` for each row of ``words`` (53-bit truncation)."""
    w, s = divmod(n, 64)
    if w + 1 >= words.shape[1] and s:
        raise ValueError(f"rows carry too few bits for iterate {n}")
    if s == 0:
        top = words[:, w]
    else:
        top = (words[:, w] << _U64(s)) | (words[:, w + 1] >> _U64(64 - s))
    return (top >> _U64(11)).astype(np.float64) * 2.0**-53


def random_words(rng: np.random.Generator, size: int, n_words: int) -> np.ndarray:
    return rng.integers(0, np.iinfo(np.uint64).max, size=(size, n_words), dtype=np.uint64, endpoint=True)


def _offset_digits(n_digits: int) -> list[int]:
    """Base-2^32 digits of (sqrt 5 - 1)/4, computed with integer arithmetic."""
    bits = 32 * n_digits + 64
    # floor(sqrt(5) * 2^bits)
    root = math.isqrt(5 << (2 * bits))
    num = (root - (1 << bits)) >> 2  # (sqrt5 - 1)/4 * 2^bits
    num >>= 64
    return [(num >> (32 * (n_digits - 1 - j))) & 0xFFFFFFFF for j in range(n_digits)]


def grid_words(grid_size: int, n_words: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Binary expansions of the offset grid ``(i + c) / grid_size`` with c = (sqrt5 - 1)/4.

    Exact long division in base 2^32, vectorised over ``i`` in ``[start, stop)``.
    """
    if not 1 <= grid_size < 2**31:
        raise ValueError("grid_size must lie in [1, 2^31)")
    stop = grid_size if stop is None else stop
    n_digits = 2 * n_words
    digits = _offset_digits(n_digits)
    G = _U64(grid_size)
    r = np.arange(start, stop, dtype=np.uint64)
    out = np.empty((stop - start, n_digits), dtype=np.uint64)
    for j, t in enumerate(digits):
        v = (r << _U64(32)) + _U64(t)
        out[:, j] = v // G
        r = v % G
    return (out[:, 0::2] << _U64(32)) | out[:, 1::2]


def grid_points(grid_size: int) -> np.ndarray:
    """Float grid ``(i + c) / grid_size``; avoids dyadic rationals."""
    return (np.arange(grid_size) + GOLDEN_OFFSET) / grid_size

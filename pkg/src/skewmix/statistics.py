"""Monte Carlo correlations of the skew-product and slow-recurrence measures.

Samples are drawn from Lebesgue x Lebesgue on ``[0, 1] x R/Z``, which the
doubling skew-product preserves.  Base orbits of the doubling map are read
off exact binary expansions (see ``orbits``), so long lags are not spoiled
by the collapse of float orbits to 0.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .dynamics import BaseMap, FibreMap, dist_trunc, wrap
from .errors import NoiseFloorError
from .orbits import grid_words, random_words, window, words_needed

__all__ = [
    "Observable",
    "indicator_observable",
    "bump",
    "mode_observable",
    "fourier_coeff",
    "CorrelationSeries",
    "correlation_mc",
    "RateFit",
    "fit_rate",
    "recurrence_times",
    "recurrence_measure",
    "RecurrenceReport",
    "recurrence_report",
    "DecayFit",
    "recurrence_decay_fit",
]

TWO_PI = 2.0 * math.pi
Y_SUPPORT = (0.0, 0.5)


# --------------------------------------------------------------------------
# observables
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Observable:
    """Complex function on ``[0, 1] x R/Z`` vanishing off ``support x R/Z``.

    ``modes`` optionally maps ``k`` to ``g_k(x)`` with
    ``g(x, u) = sum_k g_k(x) exp(2 pi i k u)``.
    """

    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    support: tuple[float, float] = Y_SUPPORT
    modes: Mapping[int, Callable[[np.ndarray], np.ndarray]] | None = None
    name: str = "observable"

    def __call__(self, x, u) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        lo, hi = self.support
        inside = (x > lo) & (x < hi)
        val = np.asarray(self.evaluator(x, u), dtype=complex)
        return np.where(inside, val, 0.0)

    def reconstruct(self, x, u) -> np.ndarray:
        """Sum of the declared modes; raises if none were given."""
        if self.modes is None:
            raise ValueError(f"{self.name} declares no Fourier modes")
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        lo, hi = self.support
        inside = (x > lo) & (x < hi)
        total = np.zeros(np.broadcast(x, u).shape, dtype=complex)
        for k, gk in self.modes.items():
            total += np.asarray(gk(x), dtype=complex) * np.exp(2j * math.pi * k * u)
        return np.where(inside, total, 0.0)


def indicator_observable() -> Observable:
    """``1_Y(x)``, constant in the fibre."""
    one = lambda x: np.ones_like(x)
    return Observable(lambda x, u: np.ones(np.broadcast(x, u).shape), Y_SUPPORT, {0: one}, "indicator")


def bump(center: float = 0.25, radius: float = 0.25) -> Callable[[np.ndarray], np.ndarray]:
    """``exp(1 - 1/(1 - t^2))`` with ``t = (x - center)/radius``, zero for ``|t| >= 1``."""
    if radius <= 0:
        raise ValueError("radius must be positive")

    def gamma(x):
        t = (np.asarray(x, dtype=float) - center) / radius
        inside = np.abs(t) < 1
        s = np.where(inside, 1.0 - t * t, 1.0)
        return np.where(inside, np.exp(1.0 - 1.0 / s), 0.0)

    return gamma


def mode_observable(k: int, gamma: Callable | None = None) -> Observable:
    """``gamma(x) exp(2 pi i k u)``; default ``gamma`` is the smooth bump filling ``Y``."""
    gamma = bump() if gamma is None else gamma
    return Observable(
        lambda x, u: gamma(x) * np.exp(2j * math.pi * k * u),
        Y_SUPPORT,
        {k: gamma},
        f"mode{k}",
    )


def fourier_coeff(g: Observable, k: int, u_grid_size: int = 64) -> Callable[[np.ndarray], np.ndarray]:
    """``x -> int g(x, u) exp(-2 pi i k u) du`` by the periodic trapezoid rule."""
    if u_grid_size < 4:
        raise ValueError("u_grid_size must be >= 4")
    u = np.arange(u_grid_size) / u_grid_size
    w = np.exp(-2j * math.pi * k * u)

    def gk(x):
        x = np.asarray(x, dtype=float)
        vals = g(x[..., None], u)
        return (vals * w).mean(axis=-1)

    return gk


# --------------------------------------------------------------------------
# correlations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CorrelationSeries:
    lags: np.ndarray
    estimates: np.ndarray  # complex, C(n) = E[g o f^n . h] - E[g o f^n] E[h]
    standard_errors: np.ndarray  # block jackknife, sqrt(var re + var im)
    sample_count: int
    seed: int
    blocks: int
    resamples: int  # samples redrawn because the orbit met an excluded point
    mean_g: np.ndarray = field(repr=False)  # E[g o f^n] per lag
    mean_g_se: np.ndarray = field(repr=False)
    mean_h: complex = 0j

    def to_rows(self):
        for n, c, s in zip(self.lags, self.estimates, self.standard_errors):
            yield int(n), float(c.real), float(c.imag), float(s)


def _block_sizes(samples: int, blocks: int) -> list[int]:
    base, extra = divmod(samples, blocks)
    return [base + (1 if b < extra else 0) for b in range(blocks)]


def _bad_rows(f: BaseMap, fib: FibreMap, xs: np.ndarray) -> np.ndarray:
    excl = np.array(sorted(set(float(p) for p in f.excluded_points) | set(float(p) for p in fib.singularities.points)))
    return np.isin(xs, excl)


def _draw_block(f, fib, rng, m, n_max, n_words):
    """Exact orbits for ``m`` Lebesgue samples with no excluded point before ``n_max``."""
    words = random_words(rng, m, n_words)
    resamples = 0
    while True:
        bad = np.zeros(len(words), dtype=bool)
        for n in range(n_max + 1):
            bad |= _bad_rows(f, fib, window(words, n))
        if not bad.any():
            return words, resamples
        nb = int(bad.sum())
        resamples += nb
        words[bad] = random_words(rng, nb, n_words)


def _run_block(f, fib, g, h, n_max, m, seed_seq, chunk):
    rng = np.random.Generator(np.random.Philox(seed_seq))
    n_words = words_needed(n_max)
    s_gh = np.zeros(n_max + 1, dtype=complex)
    s_g = np.zeros(n_max + 1, dtype=complex)
    s_h = 0j
    resamples = 0
    done = 0
    while done < m:
        c = min(chunk, m - done)
        words, r = _draw_block(f, fib, rng, c, n_max, n_words)
        resamples += r
        u = rng.random(c)
        x = window(words, 0)
        h0 = h(x, u)
        s_h += h0.sum()
        for n in range(n_max + 1):
            if n:
                u = wrap(u + fib.value(x))
                x = window(words, n)
            gn = g(x, u)
            s_gh[n] += (gn * h0).sum()
            s_g[n] += gn.sum()
        done += c
    return s_gh, s_g, s_h, resamples


def correlation_mc(
    f: BaseMap,
    fib: FibreMap,
    g: Observable,
    h: Observable,
    n_max: int,
    samples: int,
    seed: int = 1,
    blocks: int = 64,
    workers: int = 1,
    chunk: int = 1 << 17,
) -> CorrelationSeries:
    """``C(n) = int g o f_phi^n . h dnu - int g dnu int h dnu`` for ``n = 0..n_max``.

    Each of ``blocks`` sample blocks draws from its own Philox stream spawned
    from ``seed``, so results do not depend on ``workers``.  Standard errors
    are leave-one-block-out jackknife estimates.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    if not f.is_doubling:
        raise ValueError("exact Monte Carlo orbits are implemented for the doubling map only")
    blocks = max(1, min(blocks, samples))
    sizes = _block_sizes(samples, blocks)
    streams = np.random.SeedSequence(seed).spawn(blocks)
    job = lambda b: _run_block(f, fib, g, h, n_max, sizes[b], streams[b], chunk)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(job, range(blocks)))
    else:
        parts = [job(b) for b in range(blocks)]

    S_gh = np.array([p[0] for p in parts])
    S_g = np.array([p[1] for p in parts])
    S_h = np.array([p[2] for p in parts])
    m = np.array(sizes, dtype=float)
    resamples = sum(p[3] for p in parts)

    def estimate(gh, g_, h_, count):
        return gh / count - (g_ / count) * (h_ / count)

    tot = m.sum()
    est = estimate(S_gh.sum(0), S_g.sum(0), S_h.sum(), tot)
    mean_g = S_g.sum(0) / tot
    if blocks > 1:
        loo_c = np.array(
            [estimate(S_gh.sum(0) - S_gh[b], S_g.sum(0) - S_g[b], S_h.sum() - S_h[b], tot - m[b]) for b in range(blocks)]
        )
        loo_g = np.array([(S_g.sum(0) - S_g[b]) / (tot - m[b]) for b in range(blocks)])
        jk = lambda v: np.sqrt((blocks - 1) / blocks * (np.abs(v - v.mean(0)) ** 2).sum(0))
        se, se_g = jk(loo_c), jk(loo_g)
    else:
        se = np.full(n_max + 1, np.nan)
        se_g = np.full(n_max + 1, np.nan)
    return CorrelationSeries(
        np.arange(n_max + 1), est, se, samples, seed, blocks, resamples, mean_g, se_g, complex(S_h.sum() / tot)
    )


# --------------------------------------------------------------------------
# fitting
# --------------------------------------------------------------------------


def _linfit(x, y, w=None):
    """Weighted least squares ``y ~ c + s x``; returns (s, c, se(s), rms residual)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(x) if w is None else np.asarray(w, dtype=float)
    W = w.sum()
    xm, ym = (w * x).sum() / W, (w * y).sum() / W
    sxx = (w * (x - xm) ** 2).sum()
    s = (w * (x - xm) * (y - ym)).sum() / sxx
    c = ym - s * xm
    r = y - (c + s * x)
    dof = len(x) - 2
    se = math.sqrt((w * r * r).sum() / dof / sxx) if dof > 0 else 0.0
    return s, c, se, float(np.sqrt(np.mean(r * r)))


@dataclass(frozen=True)
class RateFit:
    theta: float
    confidence: float  # standard error of the fitted log-slope
    residual: float  # rms residual of log|C(n)| about the fit
    window: tuple[int, int]
    noise_lag: int | None  # first lag at or below the 3-SE floor, if reached

    def __iter__(self):
        return iter((self.theta, self.confidence))


def fit_rate(series: CorrelationSeries, n_min: int = 0, n_max: int | None = None) -> RateFit:
    """``theta = exp(slope)`` of a weighted fit of ``log|C(n)|`` on the signal window.

    The window runs from ``n_min`` up to the lag before ``|C(n)|`` first
    drops to 3 standard errors, capped at ``n_max``.
    """
    lags = np.asarray(series.lags)
    C = np.abs(np.asarray(series.estimates))
    se = np.asarray(series.standard_errors, dtype=float)
    n_max = int(lags[-1]) if n_max is None else n_max
    sel = (lags >= n_min) & (lags <= n_max)
    lags, C, se = lags[sel], C[sel], se[sel]
    signal = C > 3 * np.nan_to_num(se, nan=0.0)
    noise_lag = None
    if not signal.all():
        cut = int(np.argmin(signal))
        noise_lag = int(lags[cut])
        lags, C, se = lags[:cut], C[:cut], se[:cut]
    if len(lags) < 3:
        raise NoiseFloorError(
            f"noise floor reached at lag {noise_lag}: fewer than 3 lags carry signal", lag=noise_lag
        )
    y = np.log(C)
    w = None if np.any(~(se > 0)) else (C / se) ** 2
    s, _, s_se, rms = _linfit(lags, y, w)
    return RateFit(math.exp(s), s_se, rms, (int(lags[0]), int(lags[-1])), noise_lag)


# --------------------------------------------------------------------------
# slow recurrence
# --------------------------------------------------------------------------


def _grid_orbits(f: BaseMap, grid_size: int, horizon: int, chunk: int):
    """Yield chunks of orbits ``(horizon, c)`` of the offset grid."""
    if f.is_doubling:
        n_words = words_needed(horizon)
        for start in range(0, grid_size, chunk):
            words = grid_words(grid_size, n_words, start, min(grid_size, start + chunk))
            yield np.stack([window(words, n) for n in range(horizon)])
    else:
        from .orbits import GOLDEN_OFFSET

        for start in range(0, grid_size, chunk):
            xs = (np.arange(start, min(grid_size, start + chunk)) + GOLDEN_OFFSET) / grid_size
            yield f.orbit(xs, horizon - 1)


def _last_exceedance(terms: np.ndarray, threshold: float, above: bool) -> np.ndarray:
    """Largest ``n`` with the running average of ``terms[:n]`` beyond ``threshold`` (0 if none)."""
    n = np.arange(1, terms.shape[0] + 1)[:, None]
    avg = np.cumsum(terms, axis=0) / n
    hit = avg > threshold if above else avg < threshold
    last = terms.shape[0] - np.argmax(hit[::-1], axis=0)
    return np.where(hit.any(axis=0), last, 0)


def recurrence_times(f, S, epsilon, delta, lam, grid_size, horizon, chunk=1 << 15):
    """Per grid point, the last ``n <= horizon`` at which each slow-recurrence inequality holds.

    ``P``: average of ``-log dist_trunc`` over the first ``n`` iterates exceeds ``epsilon``.
    ``Q``: average of ``log |Df|`` over the first ``n`` iterates is below ``lam``.
    A point lies in the capped set for ``N`` iff its time is ``>= N``.
    """
    if epsilon <= 0 or delta <= 0 or lam <= 0:
        raise ValueError("epsilon, delta and lambda must be positive")
    if grid_size < 1 or horizon < 1:
        raise ValueError("grid_size and horizon must be >= 1")
    tp, tq = [], []
    for orbit in _grid_orbits(f, grid_size, horizon, chunk):
        tp.append(_last_exceedance(-np.log(dist_trunc(S, delta, orbit)), epsilon, True))
        tq.append(_last_exceedance(np.log(np.abs(f.derivative(orbit))), lam, False))
    return np.concatenate(tp), np.concatenate(tq)


def recurrence_measure(f, S, epsilon, delta, lam, N, grid_size, horizon=None) -> tuple[float, float]:
    """Grid measures of the capped slow-recurrence sets for a single ``N`` (horizon ``4N``)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    horizon = 4 * N if horizon is None else horizon
    if horizon < N:
        raise ValueError("horizon must be >= N")
    tp, tq = recurrence_times(f, S, epsilon, delta, lam, grid_size, horizon)
    return float(np.mean(tp >= N)), float(np.mean(tq >= N))


@dataclass(frozen=True)
class DecayFit:
    theta: float
    confidence: float
    used: tuple[int, ...]  # N values entering the fit
    excluded: tuple[int, ...]  # N values with zero measure
    negligible: bool = False  # every measure is zero


def recurrence_decay_fit(N_values: Sequence[int], measures: Sequence[float]) -> DecayFit:
    """``theta = exp(slope)`` of ``log measure`` against ``N`` over the nonzero entries."""
    N_values = np.asarray(N_values, dtype=float)
    measures = np.asarray(measures, dtype=float)
    nz = measures > 0
    excluded = tuple(int(n) for n in N_values[~nz])
    if not nz.any():
        return DecayFit(0.0, 0.0, (), excluded, True)
    if nz.sum() < 3:
        raise ValueError("need at least 3 nonzero measures to fit a decay rate")
    s, _, se, _ = _linfit(N_values[nz], np.log(measures[nz]))
    return DecayFit(math.exp(s), se, tuple(int(n) for n in N_values[nz]), excluded)


@dataclass(frozen=True)
class RecurrenceReport:
    epsilon: float
    delta: float
    lam: float
    N_values: tuple[int, ...]
    horizon: int
    grid_size: int
    P_measure: tuple[float, ...]
    Q_measure: tuple[float, ...]
    P_fit: DecayFit | None
    Q_fit: DecayFit | None

    def to_rows(self):
        for n, p, q in zip(self.N_values, self.P_measure, self.Q_measure):
            yield n, p, q


def _try_fit(N_values, measures):
    try:
        return recurrence_decay_fit(N_values, measures)
    except ValueError:
        return None


def recurrence_report(f, S, epsilon, delta, lam, N_values, grid_size, horizon=None) -> RecurrenceReport:
    """Capped measures of the slow-recurrence sets for each ``N`` with a shared horizon.

    The horizon defaults to ``4 max(N_values)``; using one horizon for every
    ``N`` makes the sets nested, so the measures are non-increasing in ``N``.
    """
    N_values = tuple(sorted(int(n) for n in N_values))
    if not N_values or N_values[0] < 1:
        raise ValueError("N_values must be nonempty positive integers")
    horizon = 4 * N_values[-1] if horizon is None else horizon
    if horizon < N_values[-1]:
        raise ValueError("horizon must be >= max(N_values)")
    tp, tq = recurrence_times(f, S, epsilon, delta, lam, grid_size, horizon)
    P = tuple(float(np.mean(tp >= n)) for n in N_values)
    Q = tuple(float(np.mean(tq >= n)) for n in N_values)
    return RecurrenceReport(
        epsilon, delta, lam, N_values, horizon, grid_size, P, Q, _try_fit(N_values, P), _try_fit(N_values, Q)
    )

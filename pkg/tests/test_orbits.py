import mpmath
import numpy as np
import pytest

from skewmix.orbits import GOLDEN_OFFSET, grid_points, grid_words, random_words, window, words_needed


def _value(row, prec):
    # exact rational value of the bit row, as an mpf
    total = 0
    for w in row:
        total = (total << 64) | int(w)
    with mpmath.workprec(prec):
        return mpmath.mpf(total) / mpmath.mpf(2) ** (64 * len(row))


def test_window_matches_high_precision_doubling():
    rng = np.random.default_rng(7)
    words = random_words(rng, 5, words_needed(120))
    for row_idx in range(5):
        x = _value(words[row_idx], 400)
        for n in (0, 1, 17, 53, 64, 65, 100, 120):
            with mpmath.workprec(400):
                fx = mpmath.frac(x * mpmath.mpf(2) ** n)
                expect = float(mpmath.floor(fx * 2**53)) * 2.0**-53
            assert window(words[row_idx : row_idx + 1], n)[0] == expect


def test_window_is_doubling_for_representable_points():
    words = np.array([[0xC000000000000000, 0]], dtype=np.uint64)  # 3/4
    assert window(words, 0)[0] == 0.75
    assert window(words, 1)[0] == 0.5
    assert window(words, 2)[0] == 0.0


def test_window_rejects_short_rows():
    words = np.zeros((1, 1), dtype=np.uint64)
    with pytest.raises(ValueError):
        window(words, 3)


def test_grid_words_match_exact_grid():
    G = 997
    words = grid_words(G, 3)
    with mpmath.workprec(300):
        c = (mpmath.sqrt(5) - 1) / 4
        for i in (0, 1, 500, 996):
            x = (i + c) / G
            for n in (0, 30, 90):
                fx = mpmath.frac(x * mpmath.mpf(2) ** n)
                assert window(words[i : i + 1], n)[0] == float(mpmath.floor(fx * 2**53)) * 2.0**-53


def test_grid_words_slices_agree():
    full = grid_words(1000, 2)
    part = grid_words(1000, 2, 100, 350)
    assert np.array_equal(full[100:350], part)
    assert np.allclose(window(full, 0), grid_points(1000), rtol=0, atol=2e-16)


def test_grid_avoids_dyadics():
    assert 0 < GOLDEN_OFFSET < 1
    xs = grid_points(4096)
    assert not np.any(np.isin(xs, np.arange(8193) / 8192))


def test_random_words_uniform():
    rng = np.random.default_rng(0)
    x = window(random_words(rng, 200000, 2), 37)
    assert abs(x.mean() - 0.5) < 0.005
    assert abs((x < 0.25).mean() - 0.25) < 0.005

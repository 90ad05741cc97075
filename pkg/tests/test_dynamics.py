import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skewmix.dynamics import (
    BaseMap,
    CoboundaryFibre,
    PowerFibre,
    SingularitySet,
    SkewState,
    SmoothCounterexampleFibre,
    coboundary_of,
    dist_trunc,
    doubling_map,
    eval_base,
    eval_fibre,
    eval_skew,
    load_config,
    make_fibre,
    parse_config,
    twist_ratio,
    wrap,
)
from skewmix.errors import DomainError, SingularityError

f = doubling_map()
S1 = SingularitySet((1,))


def test_doubling_structure():
    assert f.branch_count == 2
    assert f.branch_domains == [(0, Fraction(1, 2)), (Fraction(1, 2), 1)]
    assert f.expansion_floor == 2
    assert f.is_doubling


@pytest.mark.parametrize(
    "x, fx",
    [(0.3, 0.6), (Fraction(1, 3), Fraction(2, 3)), (Fraction(4, 7), Fraction(1, 7)), (Fraction(3, 4), Fraction(1, 2))],
)
def test_eval_base_examples(x, fx):
    assert eval_base(f, x) == fx


@pytest.mark.parametrize("x", [0.5, Fraction(1, 2), 1.0, 1.2, -0.1])
def test_eval_base_rejects_endpoints(x):
    with pytest.raises(DomainError) as err:
        eval_base(f, x)
    assert err.value.point == x


def test_eval_base_allows_zero():
    assert eval_base(f, 0.0) == 0.0


def test_basemap_validation():
    with pytest.raises(ValueError):
        BaseMap((0, 1), (0.5,), (0,), "contracting")
    with pytest.raises(ValueError):
        BaseMap((0, Fraction(1, 2), 1), (2, 2), (0, 0), "not onto")


@pytest.mark.parametrize(
    "a, x, val",
    [(0.3, 0, 1.0), (0.5, Fraction(1, 3), (2 / 3) ** 0.5), (0.25, Fraction(1, 3), (2 / 3) ** 0.25), (1.0, Fraction(2, 7), 5 / 7)],
)
def test_eval_fibre_examples(a, x, val):
    assert eval_fibre(PowerFibre(a), x) == pytest.approx(val, abs=1e-15)


def test_twist_ratio_rejects_singularity_and_outside():
    with pytest.raises(DomainError):
        twist_ratio(PowerFibre(0.5), f, 1)
    with pytest.raises(SingularityError):
        twist_ratio(SmoothCounterexampleFibre(), f, 0.5)
    with pytest.raises(DomainError):
        twist_ratio(PowerFibre(0.5), f, 1.5)


def test_eval_fibre_singular():
    with pytest.raises(SingularityError):
        eval_fibre(PowerFibre(0.5), 1)


def test_eval_skew_examples():
    z = eval_skew(f, PowerFibre(0.5), SkewState(0.0, 0.0))
    assert (z.x, z.u) == (0.0, 0.0)
    z = eval_skew(f, PowerFibre(1.0), SkewState(Fraction(1, 3), 0.25))
    assert z.x == Fraction(2, 3)
    assert z.u == pytest.approx(0.25 + 2 / 3, abs=1e-15)
    assert eval_skew(f, PowerFibre(0.5), SkewState(Fraction(1, 7), 0.7)).x == Fraction(2, 7)


@given(st.floats(-50, 50, allow_nan=False))
def test_wrap_range(u):
    w = wrap(u)
    assert 0.0 <= w < 1.0
    assert math.isclose(math.remainder(w - u, 1.0), 0.0, abs_tol=1e-12)


def test_skewstate_reduces_u():
    assert SkewState(0.2, 3.75).u == 0.75
    assert SkewState(0.2, -1e-300).u < 1.0


@pytest.mark.parametrize("x, d", [(0.9, 0.1), (0.5, 1.0), (1 - 2**-5, 2**-5), (0.75, 1.0)])
def test_dist_trunc_examples(x, d):
    assert dist_trunc(S1, 0.25, x) == pytest.approx(d, abs=1e-15)


def test_dist_trunc_vectorised_and_errors():
    xs = np.array([0.1, 0.8, 0.99])
    assert np.allclose(dist_trunc(S1, 0.25, xs), [1.0, 0.2, 0.01])
    with pytest.raises(ValueError):
        dist_trunc(S1, 0.0, 0.5)


@given(st.floats(0, 1), st.floats(0.01, 1))
def test_dist_trunc_is_one_outside_neighbourhood(x, delta):
    d = dist_trunc(S1, delta, x)
    assert d == 1.0 or (d < delta and d == pytest.approx(1 - x))


def test_singularity_set_invariants():
    S = SingularitySet((1, Fraction(1, 2), 1))
    assert S.points == (Fraction(1, 2), 1)
    with pytest.raises(ValueError):
        SingularitySet(())
    with pytest.raises(ValueError):
        SingularitySet((2,))


@pytest.mark.parametrize("x, r", [(0.5, 0.25 * 0.5**-0.5), (0.75, 0.5)])
def test_twist_ratio_examples(x, r):
    assert twist_ratio(PowerFibre(0.5), f, x) == pytest.approx(r, rel=1e-14)


@settings(max_examples=200)
@given(st.floats(0.01, 1.0), st.floats(0.0, 0.999999))
def test_twist_ratio_envelope(a, x):
    if x == 0.5:
        return
    fib = PowerFibre(a)
    assert fib.singular_exponent == pytest.approx(1 - a)
    assert twist_ratio(fib, f, x) <= fib.twist_envelope(x) * (1 + 1e-12)


@pytest.mark.parametrize("fib", [SmoothCounterexampleFibre(), CoboundaryFibre(0.5), CoboundaryFibre(0.25)])
def test_twist_envelope_other_fibres(fib):
    xs = (np.arange(20000) + 0.5) / 20000
    xs = xs[np.abs(xs - 0.5) > 1e-9]
    ratio = np.abs(fib.derivative(xs)) / 2
    assert np.all(ratio <= fib.twist_envelope(xs) * (1 + 1e-12))


def test_smooth_counterexample_branches_and_blowup():
    fib = SmoothCounterexampleFibre()
    x = np.array([0.1, 0.3, 0.7, 0.9])
    expect = np.where(x < 0.5, 2 - 2 * x - np.sqrt(np.abs(1 - 2 * x)), 2 - 2 * x + np.sqrt(np.abs(2 * x - 1)))
    assert np.allclose(fib.value(x), expect, atol=1e-15)
    ratios = [twist_ratio(fib, f, 0.5 + s * 2.0 ** (-2 * m)) for m in range(3, 12) for s in (-1, 1)]
    scaled = [r / 2.0**m for r, m in zip(ratios, np.repeat(np.arange(3, 12), 2))]
    assert max(scaled) / min(scaled) < 2.0
    assert ratios[-1] > 700


def test_coboundary_fibre_values():
    fib = CoboundaryFibre(0.5)
    assert fib.value(0.3) == pytest.approx(0.3**-0.5 - 0.6**-0.5)
    assert fib.value(0.8) == pytest.approx(0.8**-0.5 - 0.6**-0.5)


def test_coboundary_of_polynomial():
    fib = coboundary_of(lambda x: x * x, lambda x: 2 * x)
    assert fib.value(0.75) == pytest.approx(0.75**2 - 0.5**2)
    assert fib.derivative(0.3) == pytest.approx(0.6 - 1.2 * 2)


def test_make_fibre():
    assert make_fibre("power", 0.3) == PowerFibre(0.3)
    assert isinstance(make_fibre("smooth_counterexample"), SmoothCounterexampleFibre)
    with pytest.raises(ValueError):
        make_fibre("cubic")
    with pytest.raises(ValueError):
        PowerFibre(0.0)


def test_orbit_closed_form():
    x = 0.1234567
    orb = f.orbit(np.array([x]), 40)
    for n in range(40):
        assert orb[n, 0] == pytest.approx((2.0**n * x) % 1.0, abs=1e-15 * 2.0**n)


def test_config(tmp_path):
    text = "# motivating example\nmap = doubling\nfibre = power\na = 0.5\nsingularities = 1\n"
    assert parse_config(text)["a"] == "0.5"
    p = tmp_path / "sys.cfg"
    p.write_text(text)
    g, fib, S = load_config(p)
    assert g.is_doubling and fib == PowerFibre(0.5) and S.points == (1,)
    with pytest.raises(ValueError):
        load_config({"map": "tent"})
    with pytest.raises(ValueError):
        load_config({"colour": "red"})
    with pytest.raises(ValueError):
        parse_config("no equals sign")

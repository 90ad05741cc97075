import math
import struct

import numpy as np
import pytest

from skewmix.dynamics import PowerFibre, doubling_map
from skewmix.errors import ConvergenceError, TruncationError
from skewmix.spectral import (
    build_ulam,
    compositions,
    dump_matrix,
    load_matrix,
    mode_decay_table,
    renewal_block,
    renewal_mass_balance,
    spectral_radius,
    tail_block,
    verify_renewal,
)
from skewmix.tower import InducedScheme

f = doubling_map()
fib = PowerFibre(0.5)
Y = InducedScheme(40)
PERRON = 1 - 2.0**-40


@pytest.mark.parametrize("N", [1, 32, 256])
def test_k0_column_sums(N):
    op = build_ulam(Y, f, fib, 0, N)
    assert np.max(np.abs(op.column_sums() - PERRON)) < 1e-12
    assert np.all(op.dense().real >= 0) and np.all(op.dense().imag == 0)


def test_k0_perron_root_dense_oracle():
    op = build_ulam(Y, f, fib, 0, 32)
    ev = np.linalg.eigvals(op.dense())
    assert np.max(np.abs(ev)) == pytest.approx(PERRON, abs=1e-12)
    est = spectral_radius(op, tol=1e-13)
    assert abs(est.radius - PERRON) < 1e-12


@pytest.mark.parametrize("k", [1, 3, -2])
def test_radius_matches_dense_eigensolver(k):
    op = build_ulam(Y, f, fib, k, 128)
    ev = np.linalg.eigvals(op.dense().T)
    est = spectral_radius(op)
    assert est.radius == pytest.approx(np.max(np.abs(ev)), abs=1e-10)
    assert est.residual < 1e-12


@pytest.mark.parametrize("k", [1, 2, 5])
def test_absolute_column_sums_bounded(k):
    op = build_ulam(Y, f, fib, k, 256)
    col = np.asarray(abs(op.matrix).sum(axis=0)).ravel()
    assert np.all(col <= PERRON + 1e-12)


@pytest.mark.parametrize("k", [1, 4])
def test_single_cell_entry(k):
    # oracle: fine midpoint quadrature of sum_l 2^-l e^{-2 pi i k Phi(xi_l y)} over Y
    M = 40000
    y = (np.arange(M) + 0.5) / M * 0.5
    total = 0j
    for l in range(1, 41):
        orbit = f.orbit(y * 2.0**-l + (0.5 - 2.0**-l), l)
        total += 2.0**-l * np.exp(-2j * math.pi * k * fib.value(orbit).sum(axis=0)).mean()
    op = build_ulam(Y, f, fib, k, 1, q=4096)
    assert op.dense()[0, 0] == pytest.approx(total, abs=1e-5)
    assert build_ulam(Y, f, fib, 0, 1).dense()[0, 0] == pytest.approx(PERRON, abs=1e-15)


def test_identity_fixture():
    assert spectral_radius(np.eye(6)).radius == pytest.approx(1.0, abs=1e-15)
    assert spectral_radius(np.zeros((3, 3))).radius == 0.0


def test_nonconvergence_carries_data():
    op = build_ulam(Y, f, fib, 1, 64)
    with pytest.raises(ConvergenceError) as err:
        spectral_radius(op, tol=1e-14, max_iter=3)
    assert err.value.iterations == 3 and err.value.residual > 0
    with pytest.raises(ValueError):
        spectral_radius(op, tol=0)


def test_build_validation():
    with pytest.raises(ValueError):
        build_ulam(Y, f, fib, 1, 0)
    with pytest.raises(ValueError):
        build_ulam(Y, f, fib, 1, 8, q=0)


def test_conjugation_symmetry():
    for k in (1, 3, 7):
        a, b = build_ulam(Y, f, fib, k, 128), build_ulam(Y, f, fib, -k, 128)
        assert np.max(np.abs(a.dense() - b.dense().conj())) < 1e-15
        assert abs(spectral_radius(a).radius - spectral_radius(b).radius) < 1e-10


def test_mode_one_radius_and_refinement():
    r256 = spectral_radius(build_ulam(Y, f, fib, 1, 256)).radius
    r1024 = spectral_radius(build_ulam(Y, f, fib, 1, 1024)).radius
    assert r1024 < 1
    assert abs(r256 - r1024) < 1e-2


def test_mode_decay_table():
    rows = mode_decay_table(Y, f, fib, 2, 64)
    assert [r["k"] for r in rows] == [-2, -1, 0, 1, 2]
    assert rows[2]["radius"] == pytest.approx(PERRON, abs=1e-12)
    assert abs(rows[0]["radius"] - rows[4]["radius"]) < 1e-10
    assert all(r["radius"] < 1 for r in rows if r["k"])
    with pytest.raises(ValueError):
        mode_decay_table(Y, f, fib, 0, 64)


@pytest.mark.parametrize("L", [3, 5, 10, 20])
def test_truncation_monotone(L):
    est = spectral_radius(build_ulam(InducedScheme(L), f, fib, 0, 32))
    assert est.radius == pytest.approx(1 - 2.0**-L, abs=1e-12)


def test_blocks_sum_to_operator():
    L = InducedScheme(12)
    for k in (0, 2):
        total = sum(renewal_block(L, f, fib, n, k, 64).matrix.toarray() for n in range(1, 13))
        assert np.max(np.abs(total - build_ulam(L, f, fib, k, 64).dense())) < 1e-12


@pytest.mark.parametrize("n, mass", [(1, 0.5), (2, 0.25), (5, 2.0**-5)])
def test_block_column_sums(n, mass):
    blk = renewal_block(Y, f, fib, n, 0, 128)
    assert np.allclose(np.asarray(blk.matrix.sum(axis=0)).ravel(), mass, atol=1e-15)


def test_block_truncation_error():
    with pytest.raises(TruncationError):
        renewal_block(InducedScheme(4), f, fib, 5, 0, 16)


def test_compositions():
    assert set(compositions(3)) == {(3,), (1, 2), (2, 1), (1, 1, 1)}
    assert sum(1 for _ in compositions(8)) == 2**7
    assert set(compositions(4, 2)) == {(2, 2), (1, 1, 2), (1, 2, 1), (2, 1, 1), (1, 1, 1, 1)}


def test_renewal_examples():
    assert verify_renewal(Y, f, fib, 1, 0, 64) == 0.0
    assert verify_renewal(Y, f, fib, 2, 0, 64) <= 1e-10
    assert verify_renewal(Y, f, fib, 3, 2, 64) <= 1e-8
    with pytest.raises(ValueError):
        verify_renewal(Y, f, fib, 9, 0, 16)


@pytest.mark.parametrize("n", range(1, 6))
def test_renewal_identity(n):
    for k in range(-3, 4):
        assert verify_renewal(Y, f, fib, n, k, 128) <= 1e-8


def test_renewal_mass_balance():
    for L in (3, 40):
        for n in range(0, 12):
            assert renewal_mass_balance(InducedScheme(L), n) < 1e-14


def test_tail_block_is_phase_free():
    a = tail_block(Y, 3, 64, k=0).toarray()
    b = tail_block(Y, 3, 64, k=5).toarray()
    assert np.array_equal(a, b)
    assert np.count_nonzero(a - np.diag(np.diag(a))) == 0
    assert np.diag(a).real.mean() == pytest.approx(2.0**-3 - 2.0**-40, abs=1e-15)
    assert np.all(tail_block(InducedScheme(3), 3, 8).toarray() == 0)


def test_dump_layout_and_roundtrip(tmp_path):
    op = build_ulam(Y, f, fib, 3, 8)
    p = tmp_path / "m.bin"
    dump_matrix(op, p)
    raw = p.read_bytes()
    assert raw[:8] == b"SKWULAM1"
    assert struct.unpack_from("<qqq", raw, 8) == (8, 3, 40)
    assert len(raw) == 32 + 8 * 8 * 16
    re, im = struct.unpack_from("<dd", raw, 32 + 16 * (2 * 8 + 5))
    assert complex(re, im) == op.dense()[2, 5]
    N, k, L, M = load_matrix(p)
    assert (N, k, L) == (8, 3, 40) and np.array_equal(M, op.dense())
    p.write_bytes(raw[:-16])
    with pytest.raises(ValueError):
        load_matrix(p)

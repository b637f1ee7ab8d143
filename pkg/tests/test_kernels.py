import numpy as np
import pytest
from hypothesis import given, strategies as st

from dfee import kernels
from dfee.errors import NumericalError

from conftest import random_symmetric


def _check_decomp(a, w, zt, tol=1e-10):
    n = a.shape[0]
    assert np.all(np.diff(w) >= 0)
    assert np.abs(zt @ zt.T - np.eye(n)).max() <= tol
    recon = zt.T @ np.diag(w) @ zt
    assert np.abs(recon - a).max() <= 1e-8 * (1 + np.abs(a).max())


@pytest.mark.parametrize("n", [1, 2, 5, 100])
def test_dense_eigh_residuals(n):
    a = random_symmetric(n, seed=n)
    w, zt = kernels.eigh_dense(a)
    _check_decomp(a, w, zt)
    assert np.allclose(w, np.linalg.eigvalsh(a), atol=1e-10)


def test_one_by_one():
    w, zt = kernels.eigh_dense(np.array([[3.5]]))
    assert w.tolist() == [3.5] and zt.tolist() == [[1.0]]


@given(st.integers(2, 60), st.integers(0, 2**31))
def test_tridiagonal_matches_lapack(n, seed):
    rng = np.random.default_rng(seed)
    d = rng.exponential(size=n) + 2
    e = -np.ones(n - 1)
    w, zt = kernels.eigh_tridiagonal(d, e)
    a = np.diag(d) + np.diag(e, 1) + np.diag(e, -1)
    _check_decomp(a, w, zt)
    assert np.allclose(w, np.linalg.eigvalsh(a), atol=1e-11)


def test_sign_convention_largest_entry_positive():
    a = random_symmetric(30, seed=4)
    _, zt = kernels.eigh_dense(a)
    for row in zt:
        assert row[np.argmax(np.abs(row))] > 0


def test_values_only_agree_with_vectors():
    a = random_symmetric(40, seed=8)
    w1, _ = kernels.eigh_dense(a)
    w2, z = kernels.eigh_dense(a, vectors=False)
    assert z is None
    assert np.allclose(w1, w2, atol=1e-12)


def test_numpy_fallback_agrees():
    a = random_symmetric(25, seed=2)
    w_nb, zt_nb = kernels.eigh_dense(a)
    w_np, zt_np, info = kernels._eigh_dense_np(a, True)
    assert info == 0
    assert np.allclose(w_nb, w_np, atol=1e-11)
    # fallback output passes through the same sign normalization in eigh_dense
    assert np.abs(np.abs(zt_nb) - np.abs(zt_np)).max() < 1e-8


def test_non_convergence_raises(monkeypatch):
    monkeypatch.setattr(kernels, "MAX_QL_ITER", 0)
    if kernels.USE_NUMBA:
        with pytest.raises(NumericalError, match="30"):
            kernels.eigh_tridiagonal(np.arange(30.0), np.ones(29))


@given(st.integers(1, 80), st.integers(0, 2**31))
def test_tridiagonal_solve(n, seed):
    rng = np.random.default_rng(seed)
    sub = rng.standard_normal(max(n - 1, 0)) + 0j
    sup = rng.standard_normal(max(n - 1, 0)) + 0j
    diag = rng.standard_normal(n) + 0.3j
    b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x = kernels.solve_tridiagonal(sub, diag, sup, b)
    a = np.diag(diag) + np.diag(sub, -1) + np.diag(sup, 1)
    assert np.abs(a @ x - b).max() <= 1e-9 * (1 + np.abs(x).max())


def test_tridiagonal_solve_needs_pivoting():
    # zero leading diagonal: unpivoted Thomas elimination would divide by zero
    diag = np.array([0.0, 1.0, 2.0], complex)
    off = np.array([1.0, 1.0], complex)
    b = np.array([1.0, 2.0, 3.0], complex)
    x = kernels.solve_tridiagonal(off, diag, off, b)
    a = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    assert np.allclose(a @ x, b)


def test_singular_tridiagonal_raises():
    with pytest.raises(NumericalError):
        kernels.solve_tridiagonal(np.ones(1, complex), np.ones(2, complex), np.ones(1, complex),
                                  np.ones(2, complex))


def test_decaying_solution_free_case():
    # constant coefficients a - z: solutions rho^k with rho + 1/rho = a - z, |rho| < 1
    z = 2 + 0.5j
    n = 400
    a = np.full(n + 1, 2.0) - z
    psi = kernels.decaying_solution(a)
    rho = np.roots([1, -(2 - z), 1])
    rho = rho[np.argmin(np.abs(rho))]
    k = np.arange(100)
    assert psi[0] == 1
    assert np.allclose(psi[:100], rho ** k, rtol=1e-8, atol=1e-300)


def test_decaying_solution_no_overflow_long_chain():
    rng = np.random.default_rng(0)
    a = 2 + 3 * rng.exponential(size=5000) - (0.5 + 0.1j)
    psi = kernels.decaying_solution(a)
    assert np.all(np.isfinite(psi))


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=200), st.floats(-1e8, 1e8))
def test_welford_matches_two_pass(values, offset):
    x = np.array(values) + offset
    mean, m2 = kernels.mean_and_m2(x)
    ref = np.var(x, ddof=1)
    assert mean == pytest.approx(x.mean(), rel=1e-12, abs=1e-9)
    assert m2 / (x.size - 1) == pytest.approx(ref, rel=1e-9, abs=1e-12 * max(1.0, x.mean() ** 2))
    assert m2 >= 0

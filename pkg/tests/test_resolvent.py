import numpy as np
import pytest
from hypothesis import given, strategies as st

from dfee.densities import DensityModel
from dfee.errors import DomainError, NumericalError
from dfee.lattice import (
    BoxGeometry,
    HamiltonianMatrix,
    build_hamiltonian,
    constant_potential,
    potential_from_values,
    sample_potential,
)
from dfee.resolvent import (
    SpectralParameter,
    decoupled_resolvent_check,
    fractional_moment,
    greens_column,
    greens_entry,
    rank_one_shift_identity_check,
    weyl_solutions,
)

Z = SpectralParameter(0.5, 0.1)


def _H(N=40, idx=0, d=1):
    return build_hamiltonian(sample_potential(DensityModel.exponential(1.0), BoxGeometry(d, N), 7, idx))


def _dense_G(H, z):
    return np.linalg.inv(H.dense() - z.z * np.eye(H.size))


def test_eta_zero_rejected():
    with pytest.raises(DomainError):
        SpectralParameter(0.5, 0.0)


def test_single_site():
    g = BoxGeometry(1, 1)
    # a 1x1 operator is not a valid box, so use a decoupled diagonal operator instead
    H = HamiltonianMatrix(g, np.array([1.0, 3.0, 5.0]), np.zeros(2))
    for x, c in zip((-1, 0, 1), (1.0, 3.0, 5.0)):
        assert greens_entry(H, Z, x, x) == pytest.approx(1 / (c - Z.z), rel=1e-14)
        for y in (-1, 0, 1):
            if y != x:
                assert greens_entry(H, Z, x, y) == 0


def test_matches_dense_inverse():
    H = _H(25, 1)
    G = _dense_G(H, Z)
    for y in (-3, 0, 10):
        col = greens_column(H, Z, y)
        assert np.allclose(col.entries, G[:, H.geometry.index(y)], rtol=1e-10, atol=1e-14)


def test_two_dimensional_column():
    H = _H(3, 2, d=2)
    G = _dense_G(H, Z)
    col = greens_column(H, Z, (1, -1))
    assert np.allclose(col.entries, G[:, H.geometry.index((1, -1))], atol=1e-12)


@given(st.integers(0, 1000), st.integers(-20, 20), st.integers(-20, 20))
def test_resolvent_symmetry(idx, x, y):
    H = _H(20, idx)
    assert greens_entry(H, Z, x, y) == pytest.approx(greens_entry(H, Z, y, x), rel=1e-10, abs=1e-300)


@given(st.floats(-1, 6), st.floats(0.01, 2).flatmap(lambda e: st.sampled_from([e, -e])))
def test_herglotz(lam, eta):
    z = SpectralParameter(lam, eta)
    assert np.sign(greens_entry(_H(20, 3), z, 0, 0).imag) == np.sign(eta)


def test_residual_bound():
    H = _H(24, 9)
    col = greens_column(H, Z, 5)
    rhs = np.zeros(H.size)
    rhs[H.geometry.index(5)] = 1
    assert np.abs(H.matvec(col.entries) - Z.z * col.entries - rhs).max() <= 1e-10 * (1 + H.max_abs())


def test_rank_one_t_zero():
    direct, updated = rank_one_shift_identity_check(_H(), 0.0, Z, 3, -2)
    assert direct == pytest.approx(updated, rel=1e-13)
    assert direct == pytest.approx(greens_entry(_H(), Z, 3, -2), rel=1e-13)


def test_rank_one_large_t_limit():
    direct, updated = rank_one_shift_identity_check(_H(), 1e6, Z, 0, 0)
    assert abs(updated) < 1e-5 and abs(direct) < 1e-5
    assert updated == pytest.approx(direct, rel=1e-6)


@given(st.integers(0, 2000), st.sampled_from([0.5, 5.0, 50.0]), st.integers(-10, 10), st.integers(-10, 10))
def test_rank_one_agreement(idx, t, x, y):
    direct, updated = rank_one_shift_identity_check(_H(40, idx), t, Z, x, y)
    assert abs(direct - updated) <= 1e-9 * abs(direct)


def test_rank_one_near_singular_update():
    # decoupled sites with diagonal c = 2: 1 + t G00 = (c + t - z) / (c - z) ~ 0 at t = Re z - c
    g = BoxGeometry(1, 1)
    H = HamiltonianMatrix(g, np.array([2.0, 2.0, 2.0]), np.zeros(2))
    with pytest.raises(NumericalError, match="near-singular"):
        rank_one_shift_identity_check(H, 0.5, SpectralParameter(2.5, 1e-14), 0, 0)


def test_decoupling_small_pair():
    H = _H(200, 4)
    r = decoupled_resolvent_check(H, Z, 1, -1)
    assert r.rel_right <= 1e-6 and r.rel_left <= 1e-6


@given(st.integers(0, 500), st.integers(1, 50), st.integers(-50, -1), st.sampled_from([0.0, 10.0]))
def test_decoupling_identities(idx, x, y, t):
    r = decoupled_resolvent_check(_H(100, idx).shifted(t), Z, x, y)
    assert r.rel_right <= 1e-6 and r.rel_left <= 1e-6


def test_decoupling_large_shift():
    r = decoupled_resolvent_check(_H(60, 1).shifted(1e6), Z, 2, -3)
    assert abs(r.direct) < 1e-5
    assert abs(r.via_right) < 1e-5 and abs(r.via_left) < 1e-5


def test_decoupling_reflection_symmetry():
    N = 60
    half = DensityModel.exponential(1.0).ppf(np.random.default_rng(3).random(N + 1))
    vals = np.concatenate((half[:0:-1], half))  # V(-x) = V(x)
    H = build_hamiltonian(potential_from_values(BoxGeometry(1, N), vals))
    r = decoupled_resolvent_check(H, Z, 4, -4)
    assert abs(r.abs_right - r.abs_left) <= 1e-8


def test_decoupling_domain():
    with pytest.raises(DomainError):
        decoupled_resolvent_check(_H(), Z, 0, -1)
    with pytest.raises(DomainError):
        decoupled_resolvent_check(_H(40), Z, 25, -1)


def test_weyl_free_case():
    z = SpectralParameter(2.0, 0.5)
    w = weyl_solutions(build_hamiltonian(constant_potential(BoxGeometry(1, 300))), z)
    rho = np.roots([1, -(2 - z.z), 1])
    rho = rho[np.argmin(np.abs(rho))]
    x = np.arange(60)
    assert np.allclose(w.psi_plus[:60], rho ** x, rtol=1e-8)
    assert np.allclose(w.psi_minus[::-1][:60], rho ** x, rtol=1e-8)


def test_weyl_normalization_and_recurrence():
    w = weyl_solutions(_H(100, 2), Z)
    assert w.plus(0) == 1 and w.minus(0) == 1
    assert w.recurrence_residual() <= 1e-8


@given(st.integers(0, 500), st.integers(0, 25), st.integers(-25, 0), st.sampled_from([0.1, 0.05]))
def test_weyl_factorization(idx, x, y, eta):
    z = SpectralParameter(0.5, eta)
    H = _H(100, idx)
    direct = greens_entry(H, z, x, y)
    assert abs(weyl_solutions(H, z).greens(x, y) - direct) <= 1e-6 * abs(direct)


def test_weyl_g00():
    H = _H(100, 5)
    assert weyl_solutions(H, Z).g00() == pytest.approx(greens_entry(H, Z, 0, 0), rel=1e-10)


def test_weyl_domain():
    with pytest.raises(DomainError):
        weyl_solutions(_H(), Z).greens(-1, 2)
    with pytest.raises(DomainError):
        weyl_solutions(_H(3, 0, d=2), Z)


def test_fractional_moment_values():
    H = _H(30, 1)
    pairs = [(0, 0), (3, -1), (5, 5)]
    vals = fractional_moment(H, Z, pairs, 0.5)
    G = _dense_G(H, Z)
    ref = [abs(G[H.geometry.index(x), H.geometry.index(y)]) ** 0.5 for x, y in pairs]
    assert np.allclose(vals, ref, rtol=1e-10)
    with pytest.raises(DomainError):
        fractional_moment(H, Z, pairs, 1.0)

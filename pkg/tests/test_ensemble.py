import numpy as np
import pytest
from hypothesis import given, strategies as st

from dfee import ensemble as ens
from dfee.densities import DensityModel
from dfee.ensemble import (
    EnsembleConfig,
    Estimator,
    make_estimator,
    run_ensemble,
    sample_ensemble,
    summarize,
)
from dfee.errors import ConfigurationError, DomainError, EnsembleAbortError, NumericalError
from dfee.lattice import BoxGeometry, realization_rng
from dfee.resolvent import SpectralParameter


def _cfg(N=40, n=20, seed=5, density=None, threads=1, d=1, **kw):
    return EnsembleConfig(BoxGeometry(d, N), density or DensityModel.exponential(1.0), 1.0, n,
                          master_seed=seed, threads=threads, **kw)


def _gauss(stream=0):
    return Estimator.custom(
        f"gauss{stream}",
        lambda r: realization_rng(r.config.master_seed, r.index, 100 + stream).standard_normal(),
    )


def test_config_validation():
    with pytest.raises(ConfigurationError):
        _cfg(n=1)
    with pytest.raises(ConfigurationError):
        EnsembleConfig(BoxGeometry(1, 4), DensityModel.exponential(1.0), 0.0, 5)
    with pytest.raises(ConfigurationError):
        _cfg(shift_t=-1.0)


def test_threads_from_environment(monkeypatch):
    monkeypatch.setenv("DFEE_THREADS", "3")
    assert ens.default_threads() == 3
    monkeypatch.setenv("DFEE_THREADS", "junk")
    assert ens.default_threads() == 1


def test_unknown_estimator():
    with pytest.raises(ConfigurationError):
        make_estimator("entropy_of_everything")


def test_zero_estimator():
    st_ = run_ensemble(_cfg(), Estimator.custom("zero", lambda r: 0.0))
    assert st_.mean == 0 and st_.variance == 0
    assert st_.mean_ci == (0.0, 0.0)


def test_identical_indices_zero_variance():
    st_ = run_ensemble(_cfg(), make_estimator("block_entropy", M=5), indices=[3, 3])
    assert st_.n == 2 and st_.variance == 0.0


def test_deterministic_and_thread_independent():
    ests = [make_estimator("block_entropy", M=6), make_estimator("cut_entropy", c=0, side="left"),
            make_estimator("fractional_moment", s=0.5, lam=0.5, eta=0.1, x=2, y=-1)]
    a = sample_ensemble(_cfg(threads=1), ests)
    b = sample_ensemble(_cfg(threads=1), ests)
    c = sample_ensemble(_cfg(threads=4), ests)
    assert a.values.tobytes() == b.values.tobytes() == c.values.tobytes()
    assert a.all_stats() == c.all_stats()


def test_different_seeds_differ():
    e = make_estimator("block_entropy", M=6)
    assert run_ensemble(_cfg(seed=1), e).mean != run_ensemble(_cfg(seed=2), e).mean


def test_clean_potential_has_no_variance():
    cfg = _cfg(density=DensityModel.point_mass(), n=5)
    for e in (make_estimator("block_entropy", M=8), make_estimator("cut_entropy", c=0, side="right")):
        assert run_ensemble(cfg, e).variance == 0.0


def test_resampling_recovers_failures():
    def flaky(r):
        if r.index % 10 == 0:  # original indices only; index + 2**40 succeeds
            raise NumericalError("synthetic failure")
        return float(r.index)

    table = sample_ensemble(_cfg(n=30), [Estimator.custom("flaky", flaky)])
    assert table.resampled == 3 and table.failures == 0
    assert table.values[0, 0] == float(ens.RESAMPLE_OFFSET)


def test_abort_above_one_percent():
    def broken(r):
        if r.index % 10 in (0, 2 ** 40 % 10):
            raise NumericalError("persistent")
        return 1.0

    with pytest.raises(EnsembleAbortError) as info:
        sample_ensemble(_cfg(n=50), [Estimator.custom("broken", broken)])
    assert info.value.failures == 5 and info.value.n == 50


def test_below_one_percent_is_counted_not_fatal():
    def rare(r):
        if r.index % (2 ** 40) == 7:
            raise NumericalError("persistent")
        return 1.0

    table = sample_ensemble(_cfg(n=200), [Estimator.custom("rare", rare)])
    assert table.failures == 1 and table.values.shape == (199, 1)
    assert 7 not in table.indices.tolist()


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=50))
def test_summary_invariants(xs):
    s = summarize(xs, master_seed=1)
    assert s.variance >= 0
    assert s.mean_ci[0] <= s.mean <= s.mean_ci[1]
    assert s.variance_ci[0] <= s.variance <= s.variance_ci[1]
    assert s.variance == pytest.approx(np.var(xs, ddof=1), rel=1e-9, abs=1e-12)


def test_welford_stable_large_offset():
    x = 1e8 + np.random.default_rng(0).standard_normal(10_000)
    s = summarize(x)
    assert s.variance == pytest.approx(np.var(x, ddof=1), rel=1e-9)


def test_bootstrap_deterministic():
    x = np.random.default_rng(4).exponential(size=100)
    assert summarize(x, 9) == summarize(x, 9)


def test_ci_width_scales_like_inverse_sqrt_n():
    widths = []
    for n in (500, 2000):
        s = run_ensemble(_cfg(n=n, seed=3), _gauss())
        widths.append(s.mean_ci[1] - s.mean_ci[0])
    assert widths[0] / widths[1] == pytest.approx(2.0, rel=0.2)


def test_ci_overlap_helper():
    assert ens.ci_overlap((0, 1), (1, 2))
    assert not ens.ci_overlap((0, 1), (1.1, 2))


def test_variance_scan_structure():
    scan = ens.variance_scan(_cfg(N=40, n=12), [5, 10], splitting_M=[5, 10])
    assert [r.M for r in scan.rows] == [5, 10]
    assert [r.L for r in scan.rows] == [11, 21]
    assert scan.two_var_s_minus == pytest.approx(2 * scan.s_minus.variance)
    assert len(scan.splitting) == 2


def test_variance_scan_requires_half_box():
    with pytest.raises(ConfigurationError):
        ens.variance_scan(_cfg(N=20), [11])


def test_clean_entropy_grows_disordered_flat():
    clean = ens.variance_scan(_cfg(N=100, n=2, density=DensityModel.point_mass()), [5, 20, 45])
    means = [r.stats.mean for r in clean.rows]
    assert means == sorted(means) and means[-1] > means[0] + 0.3
    assert all(r.stats.variance == 0 for r in clean.rows)
    dis = ens.variance_scan(_cfg(N=100, n=60), [20, 45])
    a, b = dis.rows
    assert ens.ci_overlap(a.stats.mean_ci, b.stats.mean_ci)


def test_reflection_symmetry_of_half_entropies():
    table = sample_ensemble(_cfg(N=60, n=80), [make_estimator("cut_entropy", c=1, side="right"),
                                               make_estimator("cut_entropy", c=0, side="left")])
    plus, minus = table.all_stats()
    assert ens.ci_overlap(plus.mean_ci, minus.mean_ci)


def test_shift_decay_scan_small():
    sd = ens.shift_decay_scan(_cfg(N=40, n=40), [1.1, 5.0, 50.0])
    m = [s.mean for s in sd.stats]
    assert m[0] > m[1] > m[2]
    assert sd.eps[2] < 0.1
    # just above E: close to the unshifted mean
    assert abs(sd.stats[0].mean - sd.baseline.mean) < 0.5 * sd.baseline.mean
    assert sd.loglog_slope < 0


def test_shift_decay_requires_t_above_E():
    with pytest.raises(DomainError):
        ens.shift_decay_scan(_cfg(), [0.5, 2.0])


def test_bound_functional_decreases_with_shift():
    ests = [make_estimator("entropy_bound_rhs", alpha=0.5, t=t) for t in (0.0, 5.0, 50.0)]
    means = [s.mean for s in sample_ensemble(_cfg(N=40, n=30), ests).all_stats()]
    assert means[0] > means[1] > means[2]


def test_mixing_covariance_independent_hook():
    rows = ens.mixing_covariance(_cfg(n=400), [5], estimator_pair=lambda M: (_gauss(1), _gauss(2)))
    assert abs(rows[0].cov) <= 3 * rows[0].cov_stderr


def test_mixing_covariance_deterministic_potential():
    rows = ens.mixing_covariance(_cfg(N=40, n=4, density=DensityModel.point_mass()), [5, 10])
    assert all(r.cov == 0.0 for r in rows)
    assert rows[0].product_of_means == pytest.approx(rows[0].mean_right * rows[0].mean_left)


def test_covariance_with_stderr_matches_numpy():
    rng = np.random.default_rng(0)
    a = rng.standard_normal(100)
    b = a + rng.standard_normal(100)
    cov, se = ens.covariance_with_stderr(a, b)
    assert cov == pytest.approx(np.cov(a, b)[0, 1], rel=1e-12)
    assert se > 0


def test_area_law_scan_requires_2d_and_cap():
    with pytest.raises(ConfigurationError):
        ens.area_law_scan_2d(_cfg(), [2])
    with pytest.raises(ConfigurationError):
        ens.area_law_scan_2d(_cfg(N=100, d=2), [2])


def test_area_law_scan_small():
    rows = ens.area_law_scan_2d(_cfg(N=4, n=4, d=2), [1, 2])
    assert [r.L for r in rows] == [3, 5]
    assert all(r.stats.mean > 0 for r in rows)


def test_projection_decay_scan_small():
    pd = ens.projection_decay_scan(_cfg(N=40, n=20), r_max=10)
    assert pd.r == tuple(range(1, 11))
    assert pd.fit.rate > 0


def test_fractional_moment_scans_small():
    z = SpectralParameter(0.5, 0.1)
    fm = ens.fractional_moment_scan(_cfg(N=40, n=20), 0.5, z, [(x, -1) for x in range(1, 8)])
    assert fm.decay_fit.rate > 0
    sc = ens.fractional_moment_shift_scan(_cfg(N=40, n=20), 0.5, z, [10, 20, 40, 80])
    assert sc.slope < 0
    with pytest.raises(Exception):
        ens.fractional_moment_scan(_cfg(n=5), 0.5, z, [(0, 0)])

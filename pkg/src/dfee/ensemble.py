"""Disorder ensembles: deterministic parallel sampling, estimators and scans.

Every realization is a pure function of ``(master_seed, index)``. Workers
own realizations end to end and only hand back finished scalars, which are
reduced in index order, so results do not depend on the thread count.
"""

from __future__ import annotations

import hashlib
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .densities import DensityModel
from .entropy import centred_block_entropy, cut_entropy, entropy_upper_bound_rhs, splitting_residual
from .errors import ConfigurationError, DomainError, EnsembleAbortError, InsufficientDataError, NumericalError
from .lattice import BoxGeometry, apply_origin_shift, build_hamiltonian, sample_potential
from .resolvent import SpectralParameter, greens_column
from .spectral import DecayFit, fit_exponential_decay, projection_from_hamiltonian

log = logging.getLogger(__name__)

BOOTSTRAP_RESAMPLES = 2000
BOOTSTRAP_CHUNK = 250
RESAMPLE_OFFSET = 1 << 40
MAX_FAILURE_FRACTION = 0.01
MAX_SITES_2D = 40_000


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("DFEE_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class EnsembleConfig:
    geometry: BoxGeometry
    density: DensityModel
    fermi_energy: float
    realizations: int
    master_seed: int = 0
    shift_t: float = 0.0
    threads: int = field(default_factory=default_threads)

    def __post_init__(self):
        if self.realizations < 2:
            raise ConfigurationError("realizations must be >= 2")
        if not self.fermi_energy > 0:
            raise ConfigurationError("fermi_energy must be positive")
        if self.shift_t < 0:
            raise ConfigurationError("shift_t must be >= 0")
        if self.threads < 1:
            raise ConfigurationError("threads must be >= 1")


class Realization:
    """Lazily built field, Hamiltonian and projection of one disorder sample.

    Quantities are cached per origin shift so several estimators (and several
    shifts) share the sampling and the eigendecomposition.
    """

    def __init__(self, config: EnsembleConfig, index: int):
        self.config = config
        self.index = index
        self._base = None
        self._fields = {}
        self._hams = {}
        self._projs = {}
        self._greens = {}

    def _shift(self, t):
        return self.config.shift_t if t is None else float(t)

    def field(self, t=None):
        t = self._shift(t)
        if t not in self._fields:
            if self._base is None:
                self._base = sample_potential(self.config.density, self.config.geometry,
                                              self.config.master_seed, self.index)
            self._fields[t] = self._base if t == 0 else apply_origin_shift(self._base, t)
        return self._fields[t]

    def hamiltonian(self, t=None):
        t = self._shift(t)
        if t not in self._hams:
            self._hams[t] = build_hamiltonian(self.field(t))
        return self._hams[t]

    def projection(self, t=None):
        t = self._shift(t)
        if t not in self._projs:
            self._projs[t] = projection_from_hamiltonian(self.hamiltonian(t), self.config.fermi_energy)
        return self._projs[t]

    def greens(self, z: SpectralParameter, y, t=None):
        t = self._shift(t)
        key = (t, z, y)
        if key not in self._greens:
            self._greens[key] = greens_column(self.hamiltonian(t), z, y)
        return self._greens[key]


@dataclass(frozen=True)
class Estimator:
    """A named scalar functional of a :class:`Realization`."""

    name: str
    params: tuple
    fn: Callable = field(repr=False, compare=False)

    def __call__(self, realization: Realization) -> float:
        return float(self.fn(realization))

    @property
    def label(self) -> str:
        inner = ",".join(f"{k}={v}" for k, v in self.params)
        return f"{self.name}({inner})"

    @classmethod
    def custom(cls, name: str, fn: Callable) -> "Estimator":
        return cls(name, (), fn)


def _est_block_entropy(M, t=None):
    return lambda r: centred_block_entropy(r.projection(t), M).value


def _est_cut_entropy(c, side="left", t=None):
    return lambda r: cut_entropy(r.projection(t), c, side).value


def _est_splitting_residual(M, t=None):
    return lambda r: splitting_residual(r.projection(t), M)


def _est_fractional_moment(s, lam, eta, x, y, t=None):
    if not 0 < s < 1:
        raise DomainError("s must lie in (0, 1)")
    z = SpectralParameter(lam, eta)
    return lambda r: abs(r.greens(z, y, t).at(x)) ** s


def _est_projection_entry_abs(x, y, t=None):
    return lambda r: abs(r.projection(t).entry(x, y))


def _est_entropy_bound_rhs(alpha, t=None):
    return lambda r: entropy_upper_bound_rhs(r.projection(t), alpha)


ESTIMATORS = {
    "block_entropy": _est_block_entropy,
    "cut_entropy": _est_cut_entropy,
    "splitting_residual": _est_splitting_residual,
    "fractional_moment": _est_fractional_moment,
    "projection_entry_abs": _est_projection_entry_abs,
    "entropy_bound_rhs": _est_entropy_bound_rhs,
}


def make_estimator(name: str, **params) -> Estimator:
    """Build one of the registered estimators, e.g. ``make_estimator("block_entropy", M=50)``."""
    try:
        factory = ESTIMATORS[name]
    except KeyError:
        raise ConfigurationError(f"unknown estimator {name!r}") from None
    return Estimator(name, tuple(sorted(params.items())), factory(**params))


@dataclass(frozen=True)
class EnsembleStats:
    n: int
    mean: float
    variance: float
    stderr_mean: float
    mean_ci: tuple
    variance_ci: tuple
    samples_digest: str
    failures: int = 0


@dataclass(frozen=True, eq=False)
class SampleTable:
    """Per-realization values, one column per estimator, rows in index order."""

    labels: tuple
    values: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)
    failures: int = 0
    resampled: int = 0
    master_seed: int = 0

    def column(self, k) -> np.ndarray:
        if isinstance(k, str):
            k = self.labels.index(k)
        return self.values[:, k]

    def stats(self, k, scale: float = 1.0) -> EnsembleStats:
        return summarize(self.column(k) * scale, self.master_seed, self.failures)

    def all_stats(self) -> list:
        return summarize_columns(self.values, self.master_seed, self.failures)


def _evaluate(config, estimators, index):
    real = Realization(config, index)
    return np.array([est(real) for est in estimators])


def _worker(args):
    config, estimators, index = args
    try:
        return 0, _evaluate(config, estimators, index)
    except NumericalError as first:
        log.debug("realization %d failed (%s); resampling", index, first)
    try:
        return 1, _evaluate(config, estimators, index + RESAMPLE_OFFSET)
    except NumericalError as second:
        log.warning("realization %d failed after resampling: %s", index, second)
        return 2, None


def sample_ensemble(config: EnsembleConfig, estimators: Sequence[Estimator],
                    indices: Sequence[int] | None = None) -> SampleTable:
    """Evaluate every estimator on every realization.

    ``indices`` overrides the realization indices ``0..n-1`` (test hook).
    A realization that raises a numerical error is retried once under index
    ``index + 2**40``; if more than 1% still fail the run aborts.
    """
    estimators = list(estimators)
    if not estimators:
        raise ConfigurationError("no estimators given")
    if indices is None:
        indices = range(config.realizations)
    jobs = [(config, estimators, int(i)) for i in indices]
    if config.threads == 1:
        results = [_worker(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(_worker, jobs))
    failures = sum(1 for code, _ in results if code == 2)
    resampled = sum(1 for code, _ in results if code == 1)
    n = len(jobs)
    if failures > MAX_FAILURE_FRACTION * n:
        raise EnsembleAbortError(
            f"{failures} of {n} realizations failed (limit {MAX_FAILURE_FRACTION:.0%})", failures, n
        )
    keep = [(j[2], v) for j, (code, v) in zip(jobs, results) if code != 2]
    values = np.array([v for _, v in keep], dtype=float).reshape(len(keep), len(estimators))
    idx = np.array([i for i, _ in keep], dtype=np.int64)
    return SampleTable(tuple(e.label for e in estimators), values, idx, failures, resampled,
                       config.master_seed)


def _digest(x: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(x, dtype="<f8").tobytes()).hexdigest()[:16]


def _bootstrap(values: np.ndarray, master_seed: int):
    """Percentile 95% intervals for the mean and the variance of each column."""
    n, k = values.shape
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(master_seed) & (2**64 - 1), 0xB007])))
    means = np.empty((BOOTSTRAP_RESAMPLES, k))
    variances = np.empty((BOOTSTRAP_RESAMPLES, k))
    for start in range(0, BOOTSTRAP_RESAMPLES, BOOTSTRAP_CHUNK):
        stop = min(start + BOOTSTRAP_CHUNK, BOOTSTRAP_RESAMPLES)
        idx = rng.integers(0, n, size=(stop - start, n))
        for c in range(k):
            sample = values[idx, c]
            m = sample.mean(axis=1)
            means[start:stop, c] = m
            variances[start:stop, c] = ((sample - m[:, None]) ** 2).sum(axis=1) / (n - 1)
    q = [2.5, 97.5]
    return np.percentile(means, q, axis=0).T, np.percentile(variances, q, axis=0).T


def summarize_columns(values: np.ndarray, master_seed: int = 0, failures: int = 0) -> list:
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    n, k = values.shape
    if n < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {n}")
    mean_ci, var_ci = _bootstrap(values, master_seed)
    out = []
    for c in range(k):
        x = values[:, c]
        mean, m2 = kernels.mean_and_m2(x)
        var = max(m2 / (n - 1), 0.0)
        mlo, mhi = min(mean_ci[c, 0], mean), max(mean_ci[c, 1], mean)
        vlo, vhi = min(var_ci[c, 0], var), max(var_ci[c, 1], var)
        out.append(EnsembleStats(n, float(mean), float(var), math.sqrt(var / n),
                                 (float(mlo), float(mhi)), (float(vlo), float(vhi)),
                                 _digest(x), failures))
    return out


def summarize(values, master_seed: int = 0, failures: int = 0) -> EnsembleStats:
    return summarize_columns(np.asarray(values, dtype=float)[:, None], master_seed, failures)[0]


def run_ensemble(config: EnsembleConfig, estimator: Estimator, indices=None) -> EnsembleStats:
    table = sample_ensemble(config, [estimator], indices)
    return table.stats(0)


def ci_overlap(a: tuple, b: tuple) -> bool:
    return a[0] <= b[1] and b[0] <= a[1]


# ---------------------------------------------------------------------------
# scans
# ---------------------------------------------------------------------------


def _require_1d(config):
    if config.geometry.dimension != 1:
        raise ConfigurationError("this scan is one-dimensional")


def _check_half(config, values, what):
    N = config.geometry.half_width
    if max(values) > N / 2:
        raise ConfigurationError(f"max({what}) = {max(values)} exceeds N/2 = {N / 2}")


@dataclass(frozen=True)
class VarianceRow:
    M: int
    L: int
    stats: EnsembleStats


@dataclass(frozen=True)
class VarianceScan:
    rows: tuple
    s_minus: EnsembleStats
    two_var_s_minus: float
    two_var_s_minus_ci: tuple
    splitting: tuple = ()
    table: SampleTable | None = field(default=None, repr=False)


def variance_scan(base: EnsembleConfig, M_list: Sequence[int], splitting_M: Sequence[int] = ()
                  ) -> VarianceScan:
    """Block-entropy statistics per ``M`` plus ``2 Var{S_-}`` from the cut at 0.

    ``splitting_M`` adds splitting residuals computed on the same realizations.
    """
    _require_1d(base)
    M_list = [int(m) for m in M_list]
    _check_half(base, M_list + list(splitting_M), "M")
    ests = [make_estimator("block_entropy", M=M) for M in M_list]
    ests.append(make_estimator("cut_entropy", c=0, side="left"))
    ests += [make_estimator("splitting_residual", M=M) for M in splitting_M]
    table = sample_ensemble(base, ests)
    stats = table.all_stats()
    rows = tuple(VarianceRow(M, 2 * M + 1, stats[i]) for i, M in enumerate(M_list))
    sm = stats[len(M_list)]
    splitting = tuple(
        SplittingRow.from_samples(M, table.column(len(M_list) + 1 + j))
        for j, M in enumerate(splitting_M)
    )
    return VarianceScan(rows, sm, 2 * sm.variance,
                        (2 * sm.variance_ci[0], 2 * sm.variance_ci[1]), splitting, table)


@dataclass(frozen=True)
class SplittingRow:
    M: int
    n: int
    median_abs: float
    mean: float
    mean_abs: float

    @classmethod
    def from_samples(cls, M, x):
        x = np.asarray(x)
        return cls(int(M), int(x.size), float(np.median(np.abs(x))), float(x.mean()),
                   float(np.abs(x).mean()))


def splitting_scan(base: EnsembleConfig, M_list: Sequence[int]) -> list:
    _require_1d(base)
    _check_half(base, M_list, "M")
    table = sample_ensemble(base, [make_estimator("splitting_residual", M=int(M)) for M in M_list])
    return [SplittingRow.from_samples(M, table.column(j)) for j, M in enumerate(M_list)]


@dataclass(frozen=True)
class ShiftDecay:
    t_list: tuple
    baseline: EnsembleStats
    stats: tuple
    eps: tuple
    loglog_slope: float
    loglog_r_squared: float
    table: SampleTable | None = field(default=None, repr=False)


def shift_decay_scan(base: EnsembleConfig, t_list: Sequence[float]) -> ShiftDecay:
    """Cut entropy at the origin under origin shifts ``t`` (common realizations).

    Also reports ``eps(t) = E{S^t}/E{S}`` and the log-log slope of the mean
    against ``t - E``.
    """
    _require_1d(base)
    t_list = [float(t) for t in t_list]
    E = base.fermi_energy
    if any(t <= E for t in t_list):
        raise DomainError("shift_decay_scan needs every t > E")
    cfg = replace(base, shift_t=0.0)
    ests = [make_estimator("cut_entropy", c=0, side="left", t=0.0)]
    ests += [make_estimator("cut_entropy", c=0, side="left", t=t) for t in t_list]
    table = sample_ensemble(cfg, ests)
    stats = table.all_stats()
    baseline, per_t = stats[0], tuple(stats[1:])
    eps = tuple(s.mean / baseline.mean if baseline.mean > 0 else math.nan for s in per_t)
    slope, r2 = math.nan, math.nan
    if len(t_list) >= 3:
        try:
            fit = fit_exponential_decay(np.column_stack([np.log(np.array(t_list) - E),
                                                         [s.mean for s in per_t]]))
            slope, r2 = -fit.rate, fit.r_squared
        except InsufficientDataError:
            pass
    return ShiftDecay(tuple(t_list), baseline, per_t, eps, slope, r2, table)


@dataclass(frozen=True)
class MixingRow:
    M: int
    cov: float
    product_of_means: float
    cov_stderr: float
    mean_right: float
    mean_left: float


def covariance_with_stderr(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.size
    prod = (a - a.mean()) * (b - b.mean())
    cov = prod.sum() / (n - 1)
    se = prod.std(ddof=1) / math.sqrt(n)
    return float(cov), float(se)


def mixing_covariance(base: EnsembleConfig, M_list: Sequence[int],
                      estimator_pair: tuple | None = None) -> list:
    """Covariance of the right-cut entropy at ``+M`` and left-cut entropy at ``-M``.

    ``estimator_pair`` (a callable ``M -> (Estimator, Estimator)``) replaces
    the entropies; used to test the covariance estimator itself.
    """
    _require_1d(base)
    _check_half(base, M_list, "M")
    ests = []
    for M in M_list:
        if estimator_pair is not None:
            ests += list(estimator_pair(M))
        else:
            ests += [make_estimator("cut_entropy", c=int(M), side="right"),
                     make_estimator("cut_entropy", c=-int(M), side="left")]
    table = sample_ensemble(base, ests)
    rows = []
    for j, M in enumerate(M_list):
        a, b = table.column(2 * j), table.column(2 * j + 1)
        cov, se = covariance_with_stderr(a, b)
        rows.append(MixingRow(int(M), cov, float(a.mean() * b.mean()), se,
                              float(a.mean()), float(b.mean())))
    return rows


@dataclass(frozen=True)
class AreaLawRow:
    M: int
    L: int
    stats: EnsembleStats


def area_law_scan_2d(base: EnsembleConfig, M_list: Sequence[int]) -> list:
    """Statistics of ``S_Lambda / L`` for centred squares in two dimensions."""
    geo = base.geometry
    if geo.dimension != 2:
        raise ConfigurationError("area_law_scan_2d needs a two-dimensional box")
    if geo.n_sites > MAX_SITES_2D:
        raise ConfigurationError(f"box has {geo.n_sites} sites; the cap is {MAX_SITES_2D}")
    if max(M_list) > geo.half_width:
        raise ConfigurationError("block larger than the box")
    table = sample_ensemble(base, [make_estimator("block_entropy", M=int(M)) for M in M_list])
    return [AreaLawRow(int(M), 2 * int(M) + 1, table.stats(j, 1.0 / (2 * int(M) + 1)))
            for j, M in enumerate(M_list)]


@dataclass(frozen=True)
class ProjectionDecay:
    r: tuple
    stats: tuple
    fit: DecayFit


def projection_decay_scan(base: EnsembleConfig, r_max: int = 20) -> ProjectionDecay:
    """Ensemble mean of ``|P(0, r)|`` with an exponential fit over ``r >= 1``."""
    _require_1d(base)
    if r_max > base.geometry.half_width / 2:
        raise ConfigurationError("r_max must stay within N/2 of the origin")
    rs = list(range(1, r_max + 1))
    table = sample_ensemble(base, [make_estimator("projection_entry_abs", x=0, y=r) for r in rs])
    stats = tuple(table.all_stats())
    fit = fit_exponential_decay(np.column_stack([rs, [s.mean for s in stats]]))
    return ProjectionDecay(tuple(rs), stats, fit)


@dataclass(frozen=True)
class FractionalMoments:
    pairs: tuple
    stats: tuple
    decay_fit: DecayFit | None


def fractional_moment_scan(config: EnsembleConfig, s: float, z: SpectralParameter,
                           pairs: Sequence[tuple], t: float = 0.0) -> FractionalMoments:
    """``E{|G^t(x, y; z)|^s}`` per pair, with an exponential fit over ``|x - y|``."""
    if not 0 < s < 1:
        raise DomainError("s must lie in (0, 1)")
    if t < 0:
        raise DomainError("t must be >= 0")
    if config.realizations < 10:
        raise InsufficientDataError("too few realizations for a bootstrap")
    pairs = [(int(x), int(y)) for x, y in pairs]
    ests = [make_estimator("fractional_moment", s=s, lam=z.lam, eta=z.eta, x=x, y=y, t=t)
            for x, y in pairs]
    table = sample_ensemble(config, ests)
    stats = tuple(table.all_stats())
    fit = None
    dist = [abs(x - y) for x, y in pairs]
    if len(set(dist)) >= 3:
        fit = fit_exponential_decay(np.column_stack([dist, [st.mean for st in stats]]),
                                    exponent_s=s)
    return FractionalMoments(tuple(pairs), stats, fit)


@dataclass(frozen=True)
class ShiftScaling:
    t_list: tuple
    stats: tuple
    slope: float
    r_squared: float


def fractional_moment_shift_scan(config: EnsembleConfig, s: float, z: SpectralParameter,
                                 t_list: Sequence[float]) -> ShiftScaling:
    """``E{|G^t(0, 0; z)|^s}`` against ``t``; slope of the log-log fit in ``t - E``."""
    E = config.fermi_energy
    if any(t <= E for t in t_list):
        raise DomainError("needs every t > E")
    ests = [make_estimator("fractional_moment", s=s, lam=z.lam, eta=z.eta, x=0, y=0, t=float(t))
            for t in t_list]
    table = sample_ensemble(replace(config, shift_t=0.0), ests)
    stats = tuple(table.all_stats())
    fit = fit_exponential_decay(np.column_stack([np.log(np.array(t_list, float) - E),
                                                 [st.mean for st in stats]]))
    return ShiftScaling(tuple(float(t) for t in t_list), stats, -fit.rate, fit.r_squared)

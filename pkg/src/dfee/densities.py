"""Single-site potential densities and the finite-shift variance bound.

A :class:`DensityModel` is a bounded density on the half-line with an
inverse-CDF sampler. On top of it this module computes

* ``J(t) = int f(v-t)^2 / f(v) dv`` and ``F(t) = J(t) - 1`` (the
  Hammersley-Chapman-Robbins information of a shift by ``t``),
* the Jensen lower bound ``J(t) >= 1 / P(V > t)``,
* the variance lower bound ``A = E{S}^2 (1 - eps(t))^2 / F(t)`` and
* Monte Carlo toy checks of the shift inequality and of the law of total
  variance.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy import integrate, special

from .errors import ConfigurationError, DomainError, NumericalError

log = logging.getLogger(__name__)

KINDS = ("exponential", "shifted_exponential", "half_gaussian", "tabulated", "point_mass")


class FUndefinedError(NumericalError):
    """``F(t)`` cannot be evaluated (divergent or non-convergent integral)."""


@dataclass(frozen=True, eq=False)
class DensityModel:
    """Density of the i.i.d. potential values.

    Use the constructors :meth:`exponential`, :meth:`shifted_exponential`,
    :meth:`half_gaussian`, :meth:`tabulated` (or :func:`load_tabulated`)
    rather than the raw initializer. ``point_mass`` is a degenerate test-only
    model (all values zero): it can be sampled but has no density.
    """

    kind: str
    rate: float = 1.0
    offset: float = 0.0
    scale: float = 1.0
    kappa: float = 1.0
    grid: np.ndarray | None = field(default=None, repr=False)
    values: np.ndarray | None = field(default=None, repr=False)
    tail_rate: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown density kind {self.kind!r}")
        if self.kappa <= 0:
            raise ConfigurationError("kappa must be positive")
        if self.kind in ("exponential", "shifted_exponential") and not self.rate > 0:
            raise ConfigurationError("rate must be positive")
        if self.kind == "shifted_exponential" and self.offset < 0:
            raise ConfigurationError("offset must be non-negative")
        if self.kind == "half_gaussian" and not self.scale > 0:
            raise ConfigurationError("scale must be positive")

    # -- constructors -----------------------------------------------------

    @classmethod
    def exponential(cls, rate: float = 1.0, kappa: float = 1.0) -> "DensityModel":
        return cls("exponential", rate=float(rate), kappa=kappa)

    @classmethod
    def shifted_exponential(cls, rate: float = 1.0, offset: float = 0.0,
                            kappa: float = 1.0) -> "DensityModel":
        return cls("shifted_exponential", rate=float(rate), offset=float(offset), kappa=kappa)

    @classmethod
    def half_gaussian(cls, scale: float = 1.0, kappa: float = 2.0) -> "DensityModel":
        return cls("half_gaussian", scale=float(scale), kappa=kappa)

    @classmethod
    def point_mass(cls) -> "DensityModel":
        return cls("point_mass")

    @classmethod
    def tabulated(cls, grid, values, kappa: float = 1.0, tail_points: int = 5) -> "DensityModel":
        """Piecewise-linear density on ``grid`` with a fitted exponential tail.

        The tail ``f(v_last) exp(-b (v - v_last))`` keeps the support unbounded;
        ``b`` is the log-linear slope of the last ``tail_points`` samples. The
        result is renormalized; a warning is logged if the input was off by
        more than 1e-3.
        """
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 2:
            raise ConfigurationError("tabulated density needs matching 1-D grid/values (>= 2 points)")
        if np.any(np.diff(grid) <= 0):
            raise ConfigurationError("tabulated grid must be strictly increasing")
        if grid[0] < 0:
            raise ConfigurationError("tabulated grid must start at v >= 0")
        if np.any(values < 0):
            raise ConfigurationError("tabulated density values must be non-negative")
        if np.any(values == 0):
            raise ConfigurationError("tabulated density has zeros; F(t) would be undefined")
        k = min(tail_points, grid.size)
        slope = np.polyfit(grid[-k:], np.log(values[-k:]), 1)[0]
        tail_rate = -slope
        if not tail_rate > 0:
            # flat or rising tail data: fall back to the mean-matching rate
            tail_rate = 1.0 / max(grid[-1] - grid[0], 1.0)
        mass = np.trapezoid(values, grid) + values[-1] / tail_rate
        if abs(mass - 1.0) > 1e-3:
            log.warning("tabulated density normalized on load (integral was %.6g)", mass)
        return cls("tabulated", kappa=kappa, grid=grid, values=values / mass,
                   tail_rate=float(tail_rate))

    # -- basic quantities -------------------------------------------------

    @property
    def support_start(self) -> float:
        if self.kind == "shifted_exponential":
            return self.offset
        if self.kind == "tabulated":
            return float(self.grid[0])
        return 0.0

    def pdf(self, v):
        """Density ``f(v)``; zero below the support."""
        v = np.asarray(v, dtype=float)
        with np.errstate(divide="ignore"):
            out = np.exp(self.logpdf(v))
        return out if out.ndim else float(out)

    def logpdf(self, v):
        v = np.asarray(v, dtype=float)
        k = self.kind
        if k == "point_mass":
            raise ConfigurationError("point_mass has no density")
        out = np.full(v.shape, -np.inf)
        if k in ("exponential", "shifted_exponential"):
            u = v - self.support_start
            m = u >= 0
            out[m] = math.log(self.rate) - self.rate * u[m]
        elif k == "half_gaussian":
            m = v >= 0
            out[m] = (0.5 * math.log(2.0 / math.pi) - math.log(self.scale)
                      - 0.5 * (v[m] / self.scale) ** 2)
        else:
            g, f = self.grid, self.values
            inside = (v >= g[0]) & (v <= g[-1])
            out[inside] = np.log(np.interp(v[inside], g, f))
            tail = v > g[-1]
            out[tail] = math.log(f[-1]) - self.tail_rate * (v[tail] - g[-1])
        return out

    def sf(self, t: float) -> float:
        """Tail mass ``P(V > t)``."""
        k = self.kind
        if k == "point_mass":
            return 0.0 if t >= 0 else 1.0
        if t <= self.support_start:
            return 1.0
        if k in ("exponential", "shifted_exponential"):
            return math.exp(-self.rate * (t - self.support_start))
        if k == "half_gaussian":
            return float(special.erfc(t / (self.scale * math.sqrt(2.0))))
        g, f = self.grid, self.values
        tail = f[-1] / self.tail_rate
        if t >= g[-1]:
            return tail * math.exp(-self.tail_rate * (t - g[-1]))
        j = np.searchsorted(g, t, side="right") - 1
        ft = np.interp(t, g, f)
        head = 0.5 * (ft + f[j + 1]) * (g[j + 1] - t)
        return float(head + np.trapezoid(f[j + 1:], g[j + 1:]) + tail)

    def mean(self) -> float:
        k = self.kind
        if k == "point_mass":
            return 0.0
        if k in ("exponential", "shifted_exponential"):
            return self.support_start + 1.0 / self.rate
        if k == "half_gaussian":
            return self.scale * math.sqrt(2.0 / math.pi)
        return self.moment(1.0)

    def moment(self, power: float) -> float:
        """``int v^power f(v) dv`` by quadrature (finite-moment check)."""
        if self.kind == "point_mass":
            return 0.0
        fn = lambda v: v ** power * self.pdf(v)  # noqa: E731
        if self.kind != "tabulated":
            return _quad(fn, self.support_start, np.inf)
        a, b = self.grid[:-1], self.grid[1:]
        half = 0.5 * (b - a)
        v = (0.5 * (a + b))[:, None] + half[:, None] * _GL_NODES[None, :]
        body = float(np.sum(half * (fn(v) @ _GL_WEIGHTS)))
        return body + _quad(fn, float(self.grid[-1]), np.inf)

    def check_kappa_moment(self) -> float:
        """Return the declared ``kappa``-moment, raising if it is not finite."""
        m = self.moment(self.kappa)
        if not math.isfinite(m):
            raise ConfigurationError(f"kappa-moment {self.kappa} of the density is not finite")
        return m

    # -- sampling ---------------------------------------------------------

    def ppf(self, u):
        """Inverse CDF for ``u`` in ``[0, 1)``."""
        u = np.asarray(u, dtype=float)
        k = self.kind
        if k == "point_mass":
            return np.zeros_like(u)
        if k in ("exponential", "shifted_exponential"):
            return self.support_start - np.log1p(-u) / self.rate
        if k == "half_gaussian":
            return self.scale * math.sqrt(2.0) * special.erfinv(u)
        return self._tabulated_ppf(u)

    def _tabulated_ppf(self, u):
        g, f = self.grid, self.values
        seg = 0.5 * (f[1:] + f[:-1]) * np.diff(g)
        cdf = np.concatenate(([0.0], np.cumsum(seg)))
        out = np.empty_like(u)
        head = u < cdf[-1]
        uh = u[head]
        j = np.clip(np.searchsorted(cdf, uh, side="right") - 1, 0, g.size - 2)
        rem = uh - cdf[j]
        f0 = f[j]
        slope = (f[j + 1] - f[j]) / (g[j + 1] - g[j])
        # solve f0 s + slope s^2 / 2 = rem on each linear piece
        disc = np.sqrt(np.maximum(f0 * f0 + 2.0 * slope * rem, 0.0))
        with np.errstate(invalid="ignore", divide="ignore"):
            s = np.where(np.abs(slope) > 1e-300, 2.0 * rem / (f0 + disc), rem / f0)
        out[head] = g[j] + s
        ut = u[~head]
        tail_mass = 1.0 - cdf[-1]
        frac = np.clip((ut - cdf[-1]) / tail_mass, 0.0, 1.0 - 1e-16)
        out[~head] = g[-1] - np.log1p(-frac) / self.tail_rate
        return out

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return self.ppf(rng.random(size))


def load_tabulated(path, kappa: float = 1.0) -> DensityModel:
    """Read a two-column ``v f(v)`` text file (``#`` comments allowed)."""
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != 2:
        raise ConfigurationError(f"{path}: expected two columns (v, f(v))")
    return DensityModel.tabulated(data[:, 0], data[:, 1], kappa=kappa)


def _quad(fn, a, b):
    kw = dict(epsabs=0.0, epsrel=1e-12, limit=400)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(fn, a, b, **kw)
        except integrate.IntegrationWarning as exc:
            raise FUndefinedError(f"quadrature did not converge: {exc}") from None
    return val


# ---------------------------------------------------------------------------
# the shift information F(t)
# ---------------------------------------------------------------------------


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


def _tabulated_integral(logk, ref, lo, grid, t, integrand):
    """Scaled ``J`` integral for a tabulated density.

    Between consecutive kinks of ``f(u)`` and ``f(u + t)`` the integrand is a
    smooth rational function, so each segment gets a fixed Gauss-Legendre
    rule; beyond the last kink both factors are in the exponential tail and
    adaptive quadrature finishes the job.
    """
    kinks = np.unique(np.concatenate((grid, grid - t)))
    kinks = kinks[kinks > lo]
    edges = np.concatenate(([lo], kinks))
    total = 0.0
    if edges.size > 1:
        a, b = edges[:-1], edges[1:]
        half = 0.5 * (b - a)
        u = (0.5 * (a + b))[:, None] + half[:, None] * _GL_NODES[None, :]
        vals = logk(u.ravel()).reshape(u.shape) - ref
        if np.any(vals > 700):
            raise FUndefinedError(f"integrand overflow at t={t}")
        total = float(np.sum(half * (np.exp(vals) @ _GL_WEIGHTS)))
    return total + _quad(integrand, float(edges[-1]), np.inf)


def J_of_t(model: DensityModel, t: float) -> float:
    """``J(t) = int_t^inf f(v-t)^2 / f(v) dv`` by adaptive quadrature."""
    if model.kind == "point_mass":
        raise FUndefinedError("point_mass has no density")
    if t < 0:
        raise DomainError("t must be non-negative")
    if t == 0:
        return 1.0
    lo = model.support_start

    def logk(u):
        # integrand in the variable u = v - t, support u >= lo
        return 2.0 * model.logpdf(u) - model.logpdf(u + t)

    ref = float(logk(np.array([lo]))[0])
    if not math.isfinite(ref):
        raise FUndefinedError(f"integrand not finite at the lower limit (t={t})")
    if ref > 700:
        raise FUndefinedError(f"J(t) overflows at t={t}")

    def integrand(u):
        val = logk(np.array([u]))[0] - ref
        if val > 700:
            raise FUndefinedError(f"integrand overflow at t={t}")
        return math.exp(val)

    if model.kind == "tabulated":
        scaled = _tabulated_integral(logk, ref, lo, model.grid, t, integrand)
    else:
        scaled = _quad(integrand, lo, np.inf)
    if not math.isfinite(scaled):
        raise FUndefinedError(f"J(t) is not finite at t={t}")
    if ref + math.log(max(scaled, 1e-300)) > 709:
        raise FUndefinedError(f"J(t) overflows at t={t}")
    return math.exp(ref) * scaled


def F_of_t(model: DensityModel, t: float) -> float:
    """``F(t) = J(t) - 1``, clamped at zero against quadrature round-off."""
    if t <= 0:
        raise DomainError("F(t) requires t > 0")
    value = J_of_t(model, t) - 1.0
    if value < -1e-8:
        raise FUndefinedError(f"F(t) = {value:.3e} < 0; quadrature is inconsistent")
    return max(value, 0.0)


def jensen_lower_bound(model: DensityModel, t: float) -> float:
    """Lower bound ``1 / P(V > t)`` on ``J(t)``; ``inf`` if the tail underflows."""
    if t <= 0:
        raise DomainError("jensen_lower_bound requires t > 0")
    tail = model.sf(t)
    if tail <= 0.0:
        return math.inf
    return 1.0 / tail


# ---------------------------------------------------------------------------
# variance lower bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HcrBound:
    t0: float
    F_value: float
    mean_S_minus: float
    A: float
    t_grid: tuple = ()
    A_curve: tuple = ()
    eps: tuple = ()
    degenerate: bool = False


def hcr_bound(mean_S_minus: float, model: DensityModel, t_grid: Sequence[float],
              eps: Sequence[float] | None = None) -> HcrBound:
    """Best variance lower bound ``mean^2 (1 - eps(t))^2 / F(t)`` over ``t_grid``.

    ``eps`` is the measured ratio ``E{S^t}/E{S}`` on the same grid; without
    it every ``eps(t)`` is taken to be zero. Grid points where ``F`` is
    undefined are skipped. A zero mean gives the degenerate bound ``A = 0``.
    """
    t_grid = [float(t) for t in t_grid]
    if not t_grid:
        raise ConfigurationError("empty t grid")
    if eps is None:
        eps = [0.0] * len(t_grid)
    eps = [float(e) for e in eps]
    if len(eps) != len(t_grid):
        raise ConfigurationError("eps must match t_grid")
    if mean_S_minus < 0:
        raise DomainError("mean_S_minus must be non-negative")
    curve, F_vals = [], []
    for t, e in zip(t_grid, eps):
        try:
            F = F_of_t(model, t)
        except FUndefinedError:
            curve.append(math.nan)
            F_vals.append(math.nan)
            continue
        F_vals.append(F)
        curve.append(mean_S_minus ** 2 * (1.0 - e) ** 2 / F if F > 0 else math.inf)
    finite = [i for i, a in enumerate(curve) if not math.isnan(a)]
    if not finite:
        raise FUndefinedError("F(t) undefined on the whole grid: no bound")
    best = max(finite, key=lambda i: curve[i])
    return HcrBound(t0=t_grid[best], F_value=F_vals[best], mean_S_minus=mean_S_minus,
                    A=curve[best], t_grid=tuple(t_grid), A_curve=tuple(curve),
                    eps=tuple(eps), degenerate=mean_S_minus == 0)


class HcrToyResult(NamedTuple):
    lhs_variance: float
    rhs_bound: float
    stderr: float

    @property
    def holds(self) -> bool:
        return self.lhs_variance >= self.rhs_bound - 3.0 * self.stderr


def _variance_with_stderr(x):
    x = np.asarray(x, dtype=float)
    n = x.size
    c = x - x.mean()
    var = c @ c / (n - 1)
    m4 = np.mean(c ** 4)
    se = math.sqrt(max(m4 - var ** 2, 0.0) / n)
    return var, se


def hcr_toy_check(model: DensityModel, t: float, n: int = 10**5, seed: int = 0) -> HcrToyResult:
    """Check ``Var{xi} >= t^2 / F(t)`` (identity map) by Monte Carlo."""
    if n < 1000:
        raise ConfigurationError("hcr_toy_check needs n >= 1000")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0x4843])))
    xi = model.sample(rng, n)
    var, se = _variance_with_stderr(xi)
    F = F_of_t(model, t)
    rhs = t * t / F if F > 0 else math.inf
    return HcrToyResult(float(var), float(rhs), float(se))


def total_variance_check(n: int = 10**5, seed: int = 0, rate: float = 1.0):
    """Toy check of ``Var{phi(xi, eta)} >= Var{E{phi | xi}}`` for ``phi = xi + eta``.

    Returns ``(var_phi, var_conditional_mean, stderr)`` where the conditional
    mean is ``xi + E{eta}``.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0x5456])))
    model = DensityModel.exponential(rate)
    xi = model.sample(rng, n)
    eta = model.sample(rng, n)
    var_phi, se = _variance_with_stderr(xi + eta)
    var_cond, _ = _variance_with_stderr(xi + model.mean())
    return float(var_phi), float(var_cond), float(se)

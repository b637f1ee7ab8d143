"""Eigendecomposition, Fermi projections and decay profiles."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DegenerateFermiLevelError, DomainError, InsufficientDataError, RangeError
from .lattice import BoxGeometry, HamiltonianMatrix

DEGENERACY_GAP = 1e-10
FIT_FLOOR = 1e-14


@dataclass(frozen=True, eq=False)
class SpectralDecomp:
    """Ascending eigenvalues with orthonormal eigenvectors as columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)
    geometry: BoxGeometry | None = None


def eig_sym(H) -> SpectralDecomp:
    """Full symmetric eigendecomposition.

    Accepts a :class:`HamiltonianMatrix` (one-dimensional boxes go straight to
    the tridiagonal QL solver) or any symmetric ndarray.
    """
    if isinstance(H, HamiltonianMatrix):
        if H.is_tridiagonal:
            w, zt = kernels.eigh_tridiagonal(H.diagonal, H.offdiagonal)
        else:
            w, zt = kernels.eigh_dense(H.dense())
        return SpectralDecomp(w, zt.T, H.geometry)
    a = np.asarray(H, dtype=float)
    w, zt = kernels.eigh_dense(a)
    return SpectralDecomp(w, zt.T, None)


@dataclass(frozen=True, eq=False)
class FermiProjection:
    """Spectral projection of ``H`` onto the open window ``(0, E)``."""

    fermi_energy: float
    matrix: np.ndarray = field(repr=False)
    rank: int
    geometry: BoxGeometry | None = None

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def entry(self, x, y) -> float:
        g = self.geometry
        return float(self.matrix[g.index(x), g.index(y)])


def fermi_projection(decomp: SpectralDecomp, E: float) -> FermiProjection:
    if not E > 0:
        raise DomainError("Fermi energy must be positive")
    w = decomp.eigenvalues
    gap = np.abs(w - E)
    if gap.size and gap.min() < DEGENERACY_GAP:
        k = int(gap.argmin())
        raise DegenerateFermiLevelError(
            f"Fermi energy {E!r} within {DEGENERACY_GAP:g} of eigenvalue {k} ({w[k]!r})"
        )
    occ = (w > 0) & (w < E)
    v = decomp.eigenvectors[:, occ]
    P = v @ v.T
    P = 0.5 * (P + P.T)
    return FermiProjection(float(E), P, int(occ.sum()), decomp.geometry)


def projection_from_hamiltonian(H: HamiltonianMatrix, E: float) -> FermiProjection:
    return fermi_projection(eig_sym(H), E)


def projection_decay_profile(P: FermiProjection, axis_origin=0, r_max: int | None = None,
                             axis: int = 0) -> np.ndarray:
    """``|P(x0, x0 + r e_axis)|`` for ``r = 0..r_max`` as rows ``(r, value)``."""
    geo = P.geometry
    N = geo.half_width
    x0 = list(geo._coords_tuple(axis_origin))
    if N - abs(x0[axis]) < N / 2:
        raise RangeError(f"axis origin {axis_origin} is not interior")
    if r_max is None:
        r_max = N - x0[axis]
    if x0[axis] + r_max > N:
        raise RangeError(f"r_max={r_max} runs past the box edge")
    i0 = geo.index(tuple(x0))
    out = np.empty((r_max + 1, 2))
    for r in range(r_max + 1):
        x = list(x0)
        x[axis] += r
        out[r] = r, abs(P.matrix[i0, geo.index(tuple(x))])
    return out


@dataclass(frozen=True)
class DecayFit:
    amplitude_log: float
    rate: float
    exponent_s: float = 1.0
    r_squared: float = 0.0
    n_points: int = 0


def fit_exponential_decay(samples, exponent_s: float = 1.0) -> DecayFit:
    """Least-squares line through ``(r, log value)``; ``rate`` is minus the slope.

    Values at or below 1e-14 are dropped first. ``r_squared`` is reported as
    0 when the log-values have no spread.
    """
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise InsufficientDataError("samples must be (distance, value) pairs")
    keep = data[:, 1] > FIT_FLOOR
    r, y = data[keep, 0], np.log(data[keep, 1])
    if r.size < 3:
        raise InsufficientDataError(f"only {r.size} usable points (need 3)")
    slope, intercept = np.polyfit(r, y, 1)
    resid = y - (slope * r + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(resid @ resid)
    r2 = 0.0 if ss_tot <= 1e-300 else max(0.0, 1.0 - ss_res / ss_tot)
    rate = -float(slope)
    if ss_tot <= 1e-300:
        rate = 0.0
    return DecayFit(float(intercept), rate, float(exponent_s), r2, int(r.size))

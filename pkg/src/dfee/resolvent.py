"""Lattice Green's functions ``G(x, y; z) = (H - z)^{-1}(x, y)`` and identities.

One-dimensional columns are solved with a pivoted tridiagonal elimination;
two-dimensional boxes fall back to a dense complex solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DomainError, NumericalError
from .lattice import BoxGeometry, HamiltonianMatrix

RESIDUAL_TOL = 1e-10
UPDATE_SINGULAR = 1e-12


@dataclass(frozen=True)
class SpectralParameter:
    lam: float
    eta: float

    def __post_init__(self):
        if self.eta == 0:
            raise DomainError("spectral parameter must have eta != 0")

    @property
    def z(self) -> complex:
        return complex(self.lam, self.eta)


@dataclass(frozen=True, eq=False)
class GreensColumn:
    z: SpectralParameter
    source: object
    entries: np.ndarray = field(repr=False)
    geometry: BoxGeometry

    def at(self, x) -> complex:
        return complex(self.entries[self.geometry.index(x)])


def _solve(H: HamiltonianMatrix, z: complex, rhs: np.ndarray) -> np.ndarray:
    if H.is_tridiagonal:
        off = H.offdiagonal.astype(complex)
        return kernels.solve_tridiagonal(off, H.diagonal - z, off, rhs)
    a = H.dense().astype(complex)
    a[np.diag_indices_from(a)] -= z
    try:
        return np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"resolvent solve failed: {exc}") from None


def greens_column(H: HamiltonianMatrix, z: SpectralParameter, y, check: bool = True) -> GreensColumn:
    """Column ``G(., y; z)`` from ``(H - z) g = e_y``."""
    iy = H.geometry.index(y)
    rhs = np.zeros(H.size, dtype=complex)
    rhs[iy] = 1.0
    g = _solve(H, z.z, rhs)
    if check:
        res = H.matvec(g) - z.z * g - rhs
        bound = RESIDUAL_TOL * (1.0 + H.max_abs())
        if not np.all(np.isfinite(g)) or np.abs(res).max() > bound:
            raise NumericalError(f"resolvent residual {np.abs(res).max():.3e} exceeds {bound:.1e}")
    return GreensColumn(z, y, g, H.geometry)


def greens_entry(H: HamiltonianMatrix, z: SpectralParameter, x, y) -> complex:
    return greens_column(H, z, y).at(x)


def rank_one_shift_identity_check(H: HamiltonianMatrix, t: float, z: SpectralParameter,
                                  x, y) -> tuple[complex, complex]:
    """Directly solved ``G^t(x, y)`` against the rank-one update of ``G``.

    ``G^t = G - t G(., 0) G(0, .) / (1 + t G(0, 0))`` for ``H^t = H + t e_0 e_0^T``.
    """
    if t < 0:
        raise DomainError("t must be >= 0")
    direct = greens_column(H.shifted(t), z, y).at(x)
    col_y = greens_column(H, z, y)
    col_0 = greens_column(H, z, 0 if H.geometry.dimension == 1 else (0, 0))
    origin = (0,) * H.geometry.dimension
    g00 = col_0.at(origin)
    denom = 1.0 + t * g00
    if abs(denom) < UPDATE_SINGULAR:
        raise NumericalError(f"rank-one update is near-singular (|1 + t G00| = {abs(denom):.2e})")
    updated = col_y.at(x) - t * col_0.at(x) * col_y.at(origin) / denom
    return direct, complex(updated)


def _decoupled(H: HamiltonianMatrix) -> HamiltonianMatrix:
    """``H_- (+) [H(0, 0)] (+) H_+``: the 1-D operator with bonds (-1, 0), (0, 1) cut.

    Its resolvent restricted to ``[1, N]`` (``[-N, -1]``) is the resolvent of
    the half-line truncation ``H_+`` (``H_-``).
    """
    N = H.geometry.half_width
    off = H.offdiagonal.copy()
    off[N - 1] = 0.0
    off[N] = 0.0
    return HamiltonianMatrix(H.geometry, H.diagonal, off)


@dataclass(frozen=True)
class DecouplingResiduals:
    direct: complex
    via_right: complex
    via_left: complex
    abs_right: float
    abs_left: float
    rel_right: float
    rel_left: float


def decoupled_resolvent_check(Ht: HamiltonianMatrix, z: SpectralParameter, x: int, y: int
                              ) -> DecouplingResiduals:
    """Check ``G^t(x,y) = G^t(0,y) G_+(x,1)`` and ``G^t(x,y) = G^t(x,0) G_-(-1,y)``.

    ``G_+`` and ``G_-`` are resolvents of ``Ht`` truncated to ``[1, N]`` and
    ``[-N, -1]``; ``x >= 1`` and ``y <= -1``.
    """
    if Ht.geometry.dimension != 1:
        raise DomainError("decoupling identities are checked in one dimension")
    N = Ht.geometry.half_width
    if not (x >= 1 and y <= -1):
        raise DomainError("need x >= 1 and y <= -1")
    if max(abs(x), abs(y)) > N / 2:
        raise DomainError("x and y must be interior (|x|, |y| <= N/2)")
    split = _decoupled(Ht)
    col_y = greens_column(Ht, z, y)
    col_0 = greens_column(Ht, z, 0)
    g_plus = greens_column(split, z, 1).at(x)
    g_minus = greens_column(split, z, -1).at(y)
    direct = col_y.at(x)
    via_right = col_y.at(0) * g_plus
    via_left = col_0.at(x) * g_minus
    ar = abs(direct - via_right)
    al = abs(direct - via_left)
    scale = max(abs(direct), 1e-300)
    return DecouplingResiduals(direct, via_right, via_left, ar, al, ar / scale, al / scale)


@dataclass(frozen=True, eq=False)
class WeylSolutions:
    """Decaying solutions on the two half-boxes, both equal to 1 at the origin.

    ``psi_plus[k]`` is ``psi_+(k)`` for ``k = 0..N``; ``psi_minus[k]`` is
    ``psi_-(-N + k)`` so that ``psi_minus[N] = psi_-(0)``.
    """

    z: SpectralParameter
    psi_plus: np.ndarray = field(repr=False)
    psi_minus: np.ndarray = field(repr=False)
    diag_minus_z: np.ndarray = field(repr=False)

    @property
    def half_width(self) -> int:
        return self.psi_plus.size - 1

    def plus(self, x: int) -> complex:
        return complex(self.psi_plus[x])

    def minus(self, y: int) -> complex:
        return complex(self.psi_minus[y + self.half_width])

    def g00(self) -> complex:
        """``G(0, 0; z)`` recovered from the two solutions."""
        N = self.half_width
        return 1.0 / (self.diag_minus_z[N] - self.plus(1) - self.minus(-1))

    def greens(self, x: int, y: int, g00: complex | None = None) -> complex:
        """``G(0,0) psi_+(x) psi_-(y)`` for ``x >= 0 >= y``."""
        if not (x >= 0 >= y):
            raise DomainError("Weyl factorization needs x >= 0 >= y")
        g00 = self.g00() if g00 is None else g00
        return g00 * self.plus(x) * self.minus(y)

    def recurrence_residual(self) -> float:
        """Max relative residual of ``(H psi)(x) = z psi(x)`` away from the origin."""
        N = self.half_width
        a = self.diag_minus_z
        worst = 0.0
        for psi, sl in ((self.psi_plus, a[N:]), (self.psi_minus[::-1], a[N::-1])):
            nxt = np.append(psi[1:], 0.0)
            res = np.abs(sl[1:] * psi[1:] - psi[:-1] - nxt[1:])
            ref = np.abs(sl[1:] * psi[1:]) + np.abs(psi[:-1]) + np.abs(nxt[1:])
            mask = ref > 0
            if mask.any():
                worst = max(worst, float((res[mask] / ref[mask]).max()))
        return worst


def weyl_solutions(H: HamiltonianMatrix, z: SpectralParameter) -> WeylSolutions:
    """Transfer-matrix recursion from each box edge toward the origin."""
    if H.geometry.dimension != 1:
        raise DomainError("Weyl solutions are one-dimensional")
    N = H.geometry.half_width
    a = H.diagonal.astype(complex) - z.z
    psi_plus = kernels.decaying_solution(a[N:])
    psi_minus = kernels.decaying_solution(a[N::-1])[::-1].copy()
    return WeylSolutions(z, psi_plus, psi_minus, a)


def fractional_moment(H: HamiltonianMatrix, z: SpectralParameter, pairs, s: float) -> np.ndarray:
    """``|G(x, y; z)|^s`` for every ``(x, y)`` in ``pairs``, one solve per source."""
    if not 0 < s < 1:
        raise DomainError("s must lie in (0, 1)")
    cols = {}
    out = np.empty(len(pairs))
    for k, (x, y) in enumerate(pairs):
        if y not in cols:
            cols[y] = greens_column(H, z, y)
        out[k] = abs(cols[y].at(x)) ** s
    return out

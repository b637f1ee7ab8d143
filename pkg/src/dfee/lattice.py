"""Finite boxes of Z^d, i.i.d. random potentials and the lattice Hamiltonian."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .densities import DensityModel
from .errors import ConfigurationError, DomainError, RangeError


@dataclass(frozen=True)
class BoxGeometry:
    """The box ``[-N, N]^d`` with a centred block ``[-M, M]^d``.

    Sites are enumerated row-major by coordinate: in two dimensions the site
    ``(x, y)`` has index ``(x + N) * (2N + 1) + (y + N)``.
    """

    dimension: int
    half_width: int
    block_half_width: int = 0

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ConfigurationError("dimension must be 1 or 2")
        if self.half_width < 1:
            raise ConfigurationError("half_width must be >= 1")
        if not 0 <= self.block_half_width <= self.half_width:
            raise ConfigurationError(
                f"block_half_width={self.block_half_width} must lie in [0, half_width={self.half_width}]"
            )

    @property
    def side(self) -> int:
        return 2 * self.half_width + 1

    @property
    def block_side(self) -> int:
        return 2 * self.block_half_width + 1

    @property
    def n_sites(self) -> int:
        return self.side ** self.dimension

    @property
    def origin(self) -> int:
        return self.index((0,) * self.dimension)

    def with_block(self, M: int) -> "BoxGeometry":
        return replace(self, block_half_width=M)

    def _coords_tuple(self, coord):
        if np.isscalar(coord):
            coord = (coord,)
        coord = tuple(int(c) for c in coord)
        if len(coord) != self.dimension:
            raise RangeError(f"expected {self.dimension} coordinates, got {coord}")
        return coord

    def contains(self, coord) -> bool:
        return all(abs(c) <= self.half_width for c in self._coords_tuple(coord))

    def index(self, coord) -> int:
        """Enumeration index of a lattice coordinate (int in 1-D, tuple in 2-D)."""
        coord = self._coords_tuple(coord)
        if not self.contains(coord):
            raise RangeError(f"site {coord} outside the box of half-width {self.half_width}")
        idx = 0
        for c in coord:
            idx = idx * self.side + (c + self.half_width)
        return idx

    def coord(self, index: int):
        """Inverse of :meth:`index`; an int in 1-D, a tuple in 2-D."""
        if not 0 <= index < self.n_sites:
            raise RangeError(f"index {index} outside [0, {self.n_sites})")
        out = []
        for _ in range(self.dimension):
            index, r = divmod(index, self.side)
            out.append(r - self.half_width)
        out.reverse()
        return out[0] if self.dimension == 1 else tuple(out)

    @cached_property
    def coords(self) -> np.ndarray:
        """All coordinates, shape ``(n_sites, d)``, in enumeration order."""
        axis = np.arange(-self.half_width, self.half_width + 1)
        grids = np.meshgrid(*([axis] * self.dimension), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def block_indices(self, M: int | None = None) -> np.ndarray:
        """Indices of the block ``[-M, M]^d`` (default: ``block_half_width``)."""
        M = self.block_half_width if M is None else M
        if not 0 <= M <= self.half_width:
            raise RangeError(f"block half-width {M} outside [0, {self.half_width}]")
        mask = np.all(np.abs(self.coords) <= M, axis=1)
        return np.flatnonzero(mask)

    @cached_property
    def stream_codes(self) -> np.ndarray:
        """Box-size independent position of every site in the random stream.

        Sites are ordered by shell ``max_k |x_k|`` and lexicographically inside
        a shell, so the box ``[-N, N]^d`` always consumes the first
        ``(2N + 1)^d`` draws and a given coordinate gets the same draw for any
        ``N``.
        """
        c = self.coords
        shell = np.abs(c).max(axis=1)
        keys = [c[:, k] for k in range(self.dimension - 1, -1, -1)] + [shell]
        order = np.lexsort(keys)
        codes = np.empty(self.n_sites, dtype=np.int64)
        codes[order] = np.arange(self.n_sites)
        return codes


@dataclass(frozen=True, eq=False)
class PotentialField:
    """One realization of the potential, shift already applied at the origin."""

    geometry: BoxGeometry
    values: np.ndarray = field(repr=False)
    origin_shift_t: float = 0.0
    seed: int = 0
    realization_index: int = 0

    def __post_init__(self):
        self.values.setflags(write=False)

    def at(self, coord) -> float:
        return float(self.values[self.geometry.index(coord)])


def realization_rng(master_seed: int, realization_index: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by ``(master_seed, realization_index)``."""
    if realization_index < 0:
        raise ConfigurationError("realization_index must be >= 0")
    ss = np.random.SeedSequence([int(master_seed) & (2**64 - 1), int(realization_index), stream])
    return np.random.Generator(np.random.Philox(ss))


def sample_potential(density: DensityModel, geometry: BoxGeometry, master_seed: int,
                     realization_index: int) -> PotentialField:
    """Draw i.i.d. site values from ``density`` for one realization."""
    if not isinstance(density, DensityModel):
        raise ConfigurationError("density is not a samplable DensityModel")
    rng = realization_rng(master_seed, realization_index)
    u = rng.random(geometry.n_sites)
    values = np.ascontiguousarray(density.ppf(u[geometry.stream_codes]), dtype=float)
    return PotentialField(geometry, values, 0.0, int(master_seed), int(realization_index))


def constant_potential(geometry: BoxGeometry, value: float = 0.0) -> PotentialField:
    """Deterministic potential (clean lattice when ``value == 0``)."""
    if value < 0:
        raise DomainError("potential values must be non-negative")
    return PotentialField(geometry, np.full(geometry.n_sites, float(value)))


def potential_from_values(geometry: BoxGeometry, values) -> PotentialField:
    values = np.array(values, dtype=float)
    if values.shape != (geometry.n_sites,):
        raise ConfigurationError(f"expected {geometry.n_sites} values, got {values.shape}")
    if np.any(values < 0):
        raise DomainError("potential values must be non-negative")
    return PotentialField(geometry, values)


def apply_origin_shift(field_: PotentialField, t: float) -> PotentialField:
    """Return the field with ``V(0)`` replaced by ``V(0) + t``."""
    if t < 0:
        raise DomainError("origin shift t must be >= 0")
    if field_.origin_shift_t != 0:
        raise DomainError("field is already shifted")
    values = field_.values.copy()
    values[field_.geometry.origin] += t
    return replace(field_, values=values, origin_shift_t=float(t))


@dataclass(frozen=True, eq=False)
class HamiltonianMatrix:
    """``H = -Delta + V`` on the box with open boundaries.

    The diagonal is ``2d + V(x)`` and nearest neighbours are coupled by ``-1``.
    In one dimension only the two bands are stored; :meth:`dense` builds the
    full matrix on request.
    """

    geometry: BoxGeometry
    diagonal: np.ndarray = field(repr=False)
    offdiagonal: np.ndarray | None = field(default=None, repr=False)
    _dense: np.ndarray | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.geometry.n_sites

    @property
    def is_tridiagonal(self) -> bool:
        return self.geometry.dimension == 1

    def dense(self) -> np.ndarray:
        if self._dense is not None:
            return self._dense.copy()
        a = np.diag(self.diagonal)
        off = self.offdiagonal
        i = np.arange(off.size)
        a[i, i + 1] = off
        a[i + 1, i] = off
        return a

    def max_abs(self) -> float:
        return float(max(np.abs(self.diagonal).max(), 1.0))

    def matvec(self, v: np.ndarray) -> np.ndarray:
        if self.is_tridiagonal:
            out = self.diagonal * v
            out[:-1] += self.offdiagonal * v[1:]
            out[1:] += self.offdiagonal * v[:-1]
            return out
        return self._dense @ v

    def shifted(self, t: float, site=None) -> "HamiltonianMatrix":
        """Copy with ``t`` added to the diagonal entry of ``site`` (origin by default)."""
        idx = self.geometry.origin if site is None else self.geometry.index(site)
        diag = self.diagonal.copy()
        diag[idx] += t
        dense = None
        if self._dense is not None:
            dense = self._dense.copy()
            dense[idx, idx] += t
        return HamiltonianMatrix(self.geometry, diag, self.offdiagonal, dense)


def build_hamiltonian(field_: PotentialField) -> HamiltonianMatrix:
    geo = field_.geometry
    diag = 2.0 * geo.dimension + np.asarray(field_.values, dtype=float)
    if geo.dimension == 1:
        return HamiltonianMatrix(geo, diag, -np.ones(geo.n_sites - 1))
    n = geo.n_sites
    a = np.zeros((n, n))
    a[np.arange(n), np.arange(n)] = diag
    side = geo.side
    idx = np.arange(n).reshape(side, side)
    for src, dst in ((idx[:-1, :], idx[1:, :]), (idx[:, :-1], idx[:, 1:])):
        a[src.ravel(), dst.ravel()] = -1.0
        a[dst.ravel(), src.ravel()] = -1.0
    return HamiltonianMatrix(geo, diag, None, a)

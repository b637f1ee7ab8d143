"""Entanglement entropies from restricted Fermi projections.

For free fermions the entropy of a region is ``sum_i h(sigma_i)`` over the
eigenvalues ``sigma_i`` of the projection restricted to that region, with
``h`` the binary entropy in nats.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DomainError, NumericalError, RangeError
from .spectral import FermiProjection

CLAMP_EPS = 1e-8
CONSISTENCY_EPS = 1e-6
H_FLOOR = 1e-30


def binary_entropy(p):
    """``h(p) = -p log p - (1 - p) log(1 - p)`` in nats.

    Arguments within 1e-8 of ``[0, 1]`` are clamped; anything further out
    raises :class:`DomainError`.
    """
    arr = np.asarray(p, dtype=float)
    if np.any(arr < -CLAMP_EPS) or np.any(arr > 1.0 + CLAMP_EPS) or np.any(np.isnan(arr)):
        raise DomainError("binary_entropy argument outside [0, 1]")
    arr = np.clip(arr, 0.0, 1.0)
    q = 1.0 - arr
    out = np.zeros_like(arr)
    a = arr >= H_FLOOR
    b = q >= H_FLOOR
    out[a] -= arr[a] * np.log(arr[a])
    out[b] -= q[b] * np.log1p(-arr[b])
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class EntropySample:
    value: float
    kind: tuple
    realization_index: int | None = None


def restricted_spectrum(P: FermiProjection, block) -> np.ndarray:
    """Eigenvalues of the principal submatrix ``P[block, block]``."""
    block = np.asarray(block, dtype=np.intp)
    if block.size == 0:
        raise RangeError("empty block")
    if block.min() < 0 or block.max() >= P.size:
        raise RangeError("block contains sites outside the box")
    if block.size > 1 and np.all(np.diff(block) == 1):
        sub = P.matrix[block[0]:block[-1] + 1, block[0]:block[-1] + 1]
    else:
        sub = P.matrix[np.ix_(block, block)]
    w, _ = kernels.eigh_dense(sub, vectors=False)
    return w


def _entropy_of_spectrum(w) -> float:
    if w.size and (w[0] < -CONSISTENCY_EPS or w[-1] > 1.0 + CONSISTENCY_EPS):
        raise NumericalError(
            f"restricted projection spectrum [{w[0]:.3e}, {w[-1]:.3e}] leaves [0, 1]"
        )
    return float(np.sum(binary_entropy(np.clip(w, 0.0, 1.0))))


def block_entropy(P: FermiProjection, block, realization_index=None, kind=None) -> EntropySample:
    """Entropy of an arbitrary site-index set."""
    value = _entropy_of_spectrum(restricted_spectrum(P, block))
    return EntropySample(value, kind or ("block", len(np.atleast_1d(block))), realization_index)


def centred_block_entropy(P: FermiProjection, M: int, realization_index=None) -> EntropySample:
    """Entropy of the block ``[-M, M]^d``."""
    idx = P.geometry.block_indices(M)
    return block_entropy(P, idx, realization_index, ("block", M))


def _require_1d(P):
    if P.geometry is None or P.geometry.dimension != 1:
        raise DomainError("operation is defined for one-dimensional boxes only")


def cut_entropy(P: FermiProjection, cut_position: int, side: str = "left",
                margin: int | None = None, realization_index=None) -> EntropySample:
    """Entropy of ``{-N, .., c-1}`` (``side='left'``) or ``{c, .., N}`` (``'right'``)."""
    _require_1d(P)
    N = P.geometry.half_width
    margin = N // 4 if margin is None else margin
    c = int(cut_position)
    if abs(c) > N - margin:
        raise RangeError(f"cut {c} closer than {margin} sites to the boundary")
    split = c + N
    if side == "left":
        block = np.arange(0, split)
    elif side == "right":
        block = np.arange(split, P.size)
    else:
        raise DomainError(f"side must be 'left' or 'right', not {side!r}")
    if block.size == 0:
        return EntropySample(0.0, ("cut", c, side), realization_index)
    return block_entropy(P, block, realization_index, ("cut", c, side))


def splitting_residual(P: FermiProjection, M: int) -> float:
    """``S[-M, M]`` minus the two single-cut entropies at its boundaries."""
    _require_1d(P)
    if M > P.geometry.half_width / 2:
        raise RangeError(f"M={M} exceeds N/2")
    s_block = centred_block_entropy(P, M).value
    s_left_edge = cut_entropy(P, -M, "right").value
    s_right_edge = cut_entropy(P, M + 1, "left").value
    return s_block - s_left_edge - s_right_edge


def entropy_upper_bound_rhs(P: FermiProjection, alpha: float, cut: int = 0) -> float:
    """``sum_{x >= c} (sum_{y < c} |P(x, y)|^2)^alpha`` over the box."""
    _require_1d(P)
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    split = cut + P.geometry.half_width
    cross = P.matrix[split:, :split]
    rows = np.einsum("ij,ij->i", cross, cross)
    return float(np.sum(rows ** alpha))

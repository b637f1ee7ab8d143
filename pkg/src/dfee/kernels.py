"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is the reference implementation: Householder reduction to
tridiagonal form, implicit-shift QL iteration, a pivoted complex tridiagonal
solver and the rescaled transfer-matrix recursion. The numpy path routes the
same contracts through ``numpy.linalg`` (LAPACK) and plain Python loops.
Which path runs is decided once at import time, see :mod:`dfee._accel`.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, njit
from .errors import NumericalError

MAX_QL_ITER = 60
RESCALE_EVERY = 32


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@njit
def _householder_tridiag(a, vectors):
    """Reduce the symmetric matrix ``a`` (overwritten) to tridiagonal form.

    Returns ``(d, e, qt)`` with ``e[i]`` coupling ``i`` and ``i+1`` and ``qt``
    the transpose of the accumulated orthogonal factor (identity-sized dummy
    when ``vectors`` is false).
    """
    n = a.shape[0]
    d = np.empty(n)
    e = np.zeros(n)
    hs = np.zeros(n)
    p = np.empty(n)
    for i in range(n - 1, 1, -1):
        l = i - 1
        scale = 0.0
        for k in range(i):
            scale += abs(a[i, k])
        if scale == 0.0:
            e[l] = a[i, l]
            continue
        h = 0.0
        for k in range(i):
            a[i, k] /= scale
            h += a[i, k] * a[i, k]
        f = a[i, l]
        g = -math.sqrt(h) if f >= 0.0 else math.sqrt(h)
        e[l] = scale * g
        h -= f * g
        a[i, l] = f - g
        for j in range(i):
            acc = 0.0
            for k in range(i):
                acc += a[j, k] * a[i, k]
            p[j] = acc / h
        kk = 0.0
        for j in range(i):
            kk += a[i, j] * p[j]
        kk /= h + h
        for j in range(i):
            p[j] -= kk * a[i, j]
        for j in range(i):
            uj = a[i, j]
            qj = p[j]
            for k in range(i):
                a[j, k] -= uj * p[k] + qj * a[i, k]
        hs[i] = h
    if n > 1:
        e[0] = a[1, 0]
    for i in range(n):
        d[i] = a[i, i]
    if not vectors:
        return d, e, np.empty((0, 0))
    qt = np.eye(n)
    for i in range(2, n):
        h = hs[i]
        if h == 0.0:
            continue
        for k in range(i):
            dot = 0.0
            for j in range(i):
                dot += qt[k, j] * a[i, j]
            dot /= h
            for j in range(i):
                qt[k, j] -= dot * a[i, j]
    return d, e, qt


@njit
def _tql_implicit(d, e, zt, vectors, max_iter):
    """Implicit-shift QL on the tridiagonal ``(d, e)``; rotates rows of ``zt``.

    Returns the total number of QL sweeps, or ``-(l+1)`` when eigenvalue ``l``
    fails to converge within ``max_iter`` sweeps. An off-diagonal entry is
    neglected when it is small relative to its two diagonal neighbours or
    below ``eps * ||T||``; the absolute floor keeps clusters of eigenvalues
    near zero (e.g. restricted projections) from stalling.
    """
    n = d.shape[0]
    eps = 2.220446049250313e-16
    anorm = 0.0
    for i in range(n):
        row = abs(d[i]) + abs(e[i])
        if i > 0:
            row += abs(e[i - 1])
        if row > anorm:
            anorm = row
    floor = eps * anorm
    total = 0
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd or abs(e[m]) <= floor:
                    break
                m += 1
            if m == l:
                break
            if it == max_iter:
                return -(l + 1)
            it += 1
            total += 1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = 1.0
            c = 1.0
            p = 0.0
            deflated = False
            i = m - 1
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    deflated = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                if vectors:
                    for k in range(zt.shape[1]):
                        f = zt[i + 1, k]
                        zt[i + 1, k] = s * zt[i, k] + c * f
                        zt[i, k] = c * zt[i, k] - s * f
                i -= 1
            if deflated:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return total


@njit
def _eigh_dense_nb(a, vectors, max_iter):
    d, e, qt = _householder_tridiag(a, vectors)
    info = _tql_implicit(d, e, qt, vectors, max_iter)
    return d, qt, info


@njit
def _eigh_tridiagonal_nb(diag, off, vectors, max_iter):
    n = diag.shape[0]
    d = diag.copy()
    e = np.zeros(n)
    for i in range(n - 1):
        e[i] = off[i]
    zt = np.eye(n) if vectors else np.empty((0, 0))
    info = _tql_implicit(d, e, zt, vectors, max_iter)
    return d, zt, info


@njit
def _solve_tridiagonal_nb(dl, dd, du, b):
    """Gaussian elimination with partial pivoting on a complex tridiagonal system.

    All arrays are overwritten; the solution is left in ``b``. Returns the
    1-based index of a zero pivot, or 0.
    """
    n = dd.shape[0]
    for k in range(n - 1):
        if dl[k] == 0.0:
            if dd[k] == 0.0:
                return k + 1
        elif abs(dd[k]) >= abs(dl[k]):
            mult = dl[k] / dd[k]
            dd[k + 1] -= mult * du[k]
            b[k + 1] -= mult * b[k]
            if k < n - 2:
                dl[k] = 0.0
        else:
            mult = dd[k] / dl[k]
            dd[k] = dl[k]
            temp = dd[k + 1]
            dd[k + 1] = du[k] - mult * temp
            if k < n - 2:
                dl[k] = du[k + 1]
                du[k + 1] = -mult * dl[k]
            du[k] = temp
            temp = b[k]
            b[k] = b[k + 1]
            b[k + 1] = temp - mult * b[k + 1]
    if dd[n - 1] == 0.0:
        return n
    b[n - 1] /= dd[n - 1]
    if n > 1:
        b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / dd[n - 2]
    for i in range(n - 3, -1, -1):
        b[i] = (b[i] - du[i] * b[i + 1] - dl[i] * b[i + 2]) / dd[i]
    return 0


@njit
def _decaying_recursion(diag_minus_z, every):
    """Backward three-term recursion ``psi(x-1) = a(x) psi(x) - psi(x+1)``.

    ``diag_minus_z[x]`` holds ``2 + V(x) - z`` for ``x = 0..n-1``. The seed is
    ``psi(n) = 0``, ``psi(n-1) = 1`` (open boundary past the last site). Raw
    values and the log-scale in effect for each entry are returned so callers
    can normalize without overflow.
    """
    n = diag_minus_z.shape[0]
    raw = np.zeros(n, dtype=np.complex128)
    logscale = np.zeros(n)
    nxt = 0.0 + 0.0j
    cur = 1.0 + 0.0j
    lg = 0.0
    raw[n - 1] = cur
    logscale[n - 1] = lg
    steps = 0
    for x in range(n - 1, 0, -1):
        prev = diag_minus_z[x] * cur - nxt
        nxt = cur
        cur = prev
        steps += 1
        if steps % every == 0:
            s = abs(cur)
            if s > 0.0 and np.isfinite(s):
                cur /= s
                nxt /= s
                lg += math.log(s)
        raw[x - 1] = cur
        logscale[x - 1] = lg
    return raw, logscale


# ---------------------------------------------------------------------------
# pure-numpy fallbacks
# ---------------------------------------------------------------------------


def _eigh_dense_np(a, vectors):
    try:
        if vectors:
            w, v = np.linalg.eigh(a)
            return w, np.ascontiguousarray(v.T), 0
        return np.linalg.eigvalsh(a), np.empty((0, 0)), 0
    except np.linalg.LinAlgError:
        return np.empty(0), np.empty((0, 0)), -1


def _eigh_tridiagonal_np(diag, off, vectors):
    a = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    return _eigh_dense_np(a, vectors)


def _solve_tridiagonal_np(dl, dd, du, b):
    a = np.diag(dd) + np.diag(du, 1) + np.diag(dl, -1)
    try:
        b[:] = np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        return 1
    return 0


# ---------------------------------------------------------------------------
# public dispatch
# ---------------------------------------------------------------------------


def _finish(w, zt, info, n, vectors):
    if info < 0:
        raise NumericalError(
            f"eigensolver failed to converge (size {n}, iteration cap {MAX_QL_ITER})"
        )
    order = np.argsort(w, kind="stable")
    w = w[order]
    if not vectors:
        return w, None
    zt = zt[order]
    # deterministic sign: largest-magnitude entry of each vector positive
    idx = np.argmax(np.abs(zt), axis=1)
    signs = np.sign(zt[np.arange(n), idx])
    signs[signs == 0] = 1.0
    zt *= signs[:, None]
    return w, zt


def eigh_dense(a, vectors=True):
    """Eigen-decompose the symmetric matrix ``a`` (not modified).

    Returns ascending eigenvalues and, when requested, the eigenvectors as the
    ROWS of a C-contiguous array (``None`` otherwise).
    """
    a = np.array(a, dtype=np.float64, order="C", copy=True)
    n = a.shape[0]
    if n == 0:
        return np.empty(0), (np.empty((0, 0)) if vectors else None)
    if USE_NUMBA:
        w, zt, info = _eigh_dense_nb(a, vectors, MAX_QL_ITER)
    else:
        w, zt, info = _eigh_dense_np(a, vectors)
    return _finish(w, zt, info, n, vectors)


def eigh_tridiagonal(diag, off, vectors=True):
    """Eigen-decompose the symmetric tridiagonal matrix with the given bands."""
    diag = np.ascontiguousarray(diag, dtype=np.float64)
    off = np.ascontiguousarray(off, dtype=np.float64)
    n = diag.shape[0]
    if USE_NUMBA:
        w, zt, info = _eigh_tridiagonal_nb(diag, off, vectors, MAX_QL_ITER)
    else:
        w, zt, info = _eigh_tridiagonal_np(diag, off, vectors)
    return _finish(w, zt, info, n, vectors)


def solve_tridiagonal(sub, diag, sup, rhs):
    """Solve a complex tridiagonal system; inputs are left untouched."""
    dl = np.array(sub, dtype=np.complex128)
    dd = np.array(diag, dtype=np.complex128)
    du = np.array(sup, dtype=np.complex128)
    b = np.array(rhs, dtype=np.complex128)
    if USE_NUMBA:
        info = _solve_tridiagonal_nb(dl, dd, du, b)
    else:
        info = _solve_tridiagonal_np(dl, dd, du, b)
    if info:
        raise NumericalError(f"singular tridiagonal system (zero pivot at row {info})")
    return b


def decaying_solution(diag_minus_z, every=RESCALE_EVERY):
    """Solution of the three-term recursion that vanishes past the last site.

    Normalized to 1 at index 0. Retries with per-step rescaling when the
    default rescaling interval overflows.
    """
    a = np.ascontiguousarray(diag_minus_z, dtype=np.complex128)
    for step in (every, 1):
        raw, logscale = _decaying_recursion(a, step)
        if np.all(np.isfinite(raw)) and raw[0] != 0:
            break
    else:
        raise NumericalError("transfer-matrix recursion overflowed after rescaling")
    with np.errstate(under="ignore"):
        return raw / raw[0] * np.exp(logscale - logscale[0])


@njit
def _shifted_welford(x):
    """Mean and centred sum of squares; Welford on ``x - x[0]`` with a
    compensated (Neumaier) accumulation of the second moment."""
    n = x.shape[0]
    if n == 0:
        return math.nan, math.nan
    ref = x[0]
    mean = 0.0
    m2 = 0.0
    comp = 0.0
    for i in range(n):
        v = x[i] - ref
        delta = v - mean
        mean += delta / (i + 1)
        term = delta * (v - mean)
        t = m2 + term
        if abs(m2) >= abs(term):
            comp += (m2 - t) + term
        else:
            comp += (term - t) + m2
        m2 = t
    return mean + ref, m2 + comp


def mean_and_m2(x):
    """Single-pass mean and centred sum of squares of a 1-D sample."""
    return _shifted_welford(np.ascontiguousarray(x, dtype=np.float64))

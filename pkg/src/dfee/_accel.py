"""Backend selection for the numeric kernels.

Set ``DFEE_DISABLE_NUMBA=1`` before import to run every kernel through its
pure-numpy fallback instead of the numba-compiled path.
"""

import os

_FALSE = {"", "0", "false", "no", "off"}



def _numba_enabled(environ) -> bool:
    return environ.get("DFEE_DISABLE_NUMBA", "").strip().lower() in _FALSE


USE_NUMBA = _numba_enabled(os.environ)

if USE_NUMBA:
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is a hard dependency
        USE_NUMBA = False

BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(func):
    """Compile ``func`` with numba (nogil, cached) when the numba backend is on."""
    if not USE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)

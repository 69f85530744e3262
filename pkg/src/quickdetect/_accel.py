"""Backend selection for the hot kernels.

Set ``QUICKDETECT_NO_NUMBA=1`` to force the pure-numpy code path even when
numba is importable.
"""
import os
import warnings

_DISABLED = os.environ.get("QUICKDETECT_NO_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

# an outdated system TBB only means numba falls back to OpenMP; not worth a warning
warnings.filterwarnings("ignore", message="The TBB threading layer requires")

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    _numba = None

HAVE_NUMBA = _numba is not None
USE_NUMBA = HAVE_NUMBA and not _DISABLED


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


if HAVE_NUMBA:
    njit = _numba.njit
    prange = _numba.prange
else:  # pragma: no cover
    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def deco(func):
            return func
        return deco

    prange = range


def set_threads(n):
    """Limit numba's worker pool; a no-op on the numpy backend."""
    if not HAVE_NUMBA or n is None:
        return
    n = max(1, min(int(n), _numba.config.NUMBA_NUM_THREADS))
    _numba.set_num_threads(n)

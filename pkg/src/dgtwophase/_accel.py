"""Backend switch for the jitted kernels.

Set ``DGTWOPHASE_BACKEND=numpy`` to run the pure-numpy fallbacks instead of
the numba versions (useful for debugging and for the benchmark comparison).
"""
import os

BACKEND = os.environ.get("DGTWOPHASE_BACKEND", "numba").strip().lower()

try:
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and BACKEND != "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` with caching, or a no-op decorator when numba is off."""
    kwargs.setdefault("cache", True)
    if HAVE_NUMBA:
        return _njit(*args, **kwargs)

    def deco(fn):
        return fn

    if args and callable(args[0]):
        return args[0]
    return deco

"""Numba/NumPy backend selection for the hot kernels.

Every performance-critical inner loop in this package exists twice: a
numba ``@njit`` kernel and a vectorized pure-NumPy fallback that computes
the same thing (consuming the same pre-drawn uniforms, so outputs match).
The active path is chosen once at import time from the environment:

    POVMTOMO_BACKEND=numba   (default when numba imports cleanly)
    POVMTOMO_BACKEND=numpy   force the fallback

``benchmarks/backend_bench.py`` times the two paths against each other.
"""

import os

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

_requested = os.environ.get("POVMTOMO_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"POVMTOMO_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

USE_NUMBA = HAS_NUMBA and _requested == "numba"
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise.

    Kernels are still compiled when the numpy backend is selected by env
    flag (so benchmarks can exercise both); dispatchers simply do not call
    them. Only a missing numba install degrades this to a no-op.
    """
    if not HAS_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)


def dispatch(numba_fn, numpy_fn):
    """Pick the active implementation for a kernel pair."""
    return numba_fn if USE_NUMBA else numpy_fn

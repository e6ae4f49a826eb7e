"""Kernel backend selection.

Hot loops are written once as plain Python over numpy arrays and compiled
with numba when it is available.  Setting ``DUNES_BACKEND=numpy`` before
import skips compilation and runs the same code interpreted, which is slow
but bit-identical and handy for debugging.
"""

import os
import warnings

import numpy as np

BACKEND = os.environ.get("DUNES_BACKEND", "numba").strip().lower()
if BACKEND not in ("numba", "numpy"):
    warnings.warn(f"unknown DUNES_BACKEND={BACKEND!r}, using numba")
    BACKEND = "numba"

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = BACKEND == "numba" and numba is not None
if BACKEND == "numba" and numba is None:  # pragma: no cover
    BACKEND = "numpy"


def njit(func=None, *, inline=False):
    """Compile ``func`` with numba in nopython mode, or return it unchanged.

    Kernels are built without numba's reference-counting runtime: none of
    them allocates, and per-call refcounting of array arguments costs more
    than the work inside small helpers.  ``inline=True`` additionally splices
    a helper into its callers at the numba IR level.
    """
    if func is None:
        return lambda f: njit(f, inline=inline)
    if USE_NUMBA:
        opts = {"cache": True, "nogil": True, "_nrt": False}
        if inline:
            opts["inline"] = "always"
        return numba.njit(**opts)(func)
    return func


def interpreted(func):
    """Return the pure-Python body of a kernel, however it was decorated."""
    return getattr(func, "py_func", func)


class quiet_overflow:
    """Silence numpy's wraparound warnings for the interpreted uint64 path."""

    def __enter__(self):
        self._state = np.seterr(over="ignore")
        return self

    def __exit__(self, *exc):
        np.seterr(**self._state)
        return False

"""Kernel backend selection.

Hot numeric kernels are compiled with numba by default. Setting the
environment variable SDLAB_BACKEND=numpy before import selects the pure
numpy/Python fallback (same functions, no JIT). Both paths process batches
row by row, so a sample's result does not depend on the batch it sits in.
"""

import os

BACKEND = os.environ.get("SDLAB_BACKEND", "numba").lower()

if BACKEND not in ("numba", "numpy"):
    raise ValueError(f"SDLAB_BACKEND must be 'numba' or 'numpy', got {BACKEND!r}")

if BACKEND == "numba":
    from numba import njit as _njit

    def maybe_njit(fn):
        return _njit(cache=True, fastmath=False)(fn)
else:
    def maybe_njit(fn):
        return fn

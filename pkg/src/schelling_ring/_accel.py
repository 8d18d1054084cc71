"""JIT switch for the hot kernels.

Set ``SCHELLING_DISABLE_JIT=1`` to run every kernel as plain Python/numpy.
Both paths share source and RNG arithmetic, so traces are identical.
"""

import os

JIT_ENABLED = os.environ.get("SCHELLING_DISABLE_JIT", "").strip().lower() in ("", "0", "false", "no")

if JIT_ENABLED:
    import numba

    def kernel(fn):
        return numba.njit(cache=True, nogil=True)(fn)

else:

    def kernel(fn):
        return fn

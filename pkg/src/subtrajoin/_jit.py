"""Optional numba acceleration for the hot kernels.

Kernels are written in the numba-compatible subset of Python/numpy. When
``SUBTRAJOIN_DISABLE_JIT`` is set to a truthy value (or numba is missing) the
decorator is a no-op and the kernels run as plain Python. Either way every
kernel exposes ``py_func`` so benchmarks can time both paths side by side.
"""

from __future__ import annotations

import os

_FLAG = "SUBTRAJOIN_DISABLE_JIT"

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

JIT_ENABLED = numba is not None and os.environ.get(_FLAG, "").strip().lower() not in (
    "1",
    "true",
    "yes",
    "on",
)


def njit(func):
    if not JIT_ENABLED:
        func.py_func = func
        return func
    return numba.njit(cache=True, nogil=True)(func)

"""JIT switch for the hot kernels.

Set ``PUCCI_SERRIN_NO_NUMBA=1`` to run every kernel through its pure
Python/numpy path.  The flag is read once at import time.
"""

from __future__ import annotations

import os

_FALSY = {"", "0", "false", "no", "off"}

USE_NUMBA = os.environ.get("PUCCI_SERRIN_NO_NUMBA", "0").strip().lower() in _FALSY

if USE_NUMBA:
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is a hard dependency
        USE_NUMBA = False


def njit(func):
    """``numba.njit(cache=True)`` when enabled, identity otherwise."""
    if USE_NUMBA:
        return numba.njit(cache=True)(func)
    return func


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"

"""Numba backend switch.

Set ``CLICKIPI_DISABLE_NUMBA=1`` to force the pure-numpy kernels. When numba is
not importable the numpy path is used regardless of the flag.
"""

from __future__ import annotations

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_FALSY = {"", "0", "false", "no", "off"}

HAS_NUMBA = numba is not None
NUMBA_DISABLED = os.environ.get("CLICKIPI_DISABLE_NUMBA", "").strip().lower() not in _FALSY
USE_NUMBA = HAS_NUMBA and not NUMBA_DISABLED


def njit(func):
    """Compile ``func`` in nopython mode if numba is present, else return it unchanged."""
    if not HAS_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"

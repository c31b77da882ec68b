"""numba switch.

Set ``EDGECHAIN_DISABLE_NUMBA=1`` to run every kernel as plain Python/numpy.
The flag is read once at import time.
"""

from __future__ import annotations

import os

_DISABLED = os.environ.get("EDGECHAIN_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    from numba import njit as _njit
except ImportError:  # pragma: no cover
    _njit = None

USE_NUMBA = _njit is not None and not _DISABLED


def njit(fn):
    if USE_NUMBA:
        return _njit(cache=True, nogil=True)(fn)
    return fn

"""Numba switch.

Hot kernels are written once as plain Python loops and compiled with
``numba.njit`` unless ``HOLDERIP_DISABLE_NUMBA`` is set to a truthy value
(or numba is not importable), in which case the pure-numpy implementations
in :mod:`holderip._kernels` are used instead.
"""
from __future__ import annotations

import os

_FLAG = os.environ.get("HOLDERIP_DISABLE_NUMBA", "").strip().lower()

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

NUMBA_AVAILABLE = _numba is not None
USE_NUMBA = NUMBA_AVAILABLE and _FLAG not in ("1", "true", "yes", "on")


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if NUMBA_AVAILABLE:
        return _numba.njit(*args, **kwargs)

    def wrap(fn):
        return fn

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return wrap


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"

"""Numba switch.

Kernels are compiled with numba unless ``ENTROQ_DISABLE_NUMBA`` is set to a
truthy value (or numba is not importable), in which case every kernel entry
point dispatches to its pure-numpy twin.  The flag is read once at import.
"""
from __future__ import annotations

import os

_FLAG = os.environ.get("ENTROQ_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError
    import numba as _numba
except ImportError:
    _numba = None

NUMBA_ENABLED: bool = _numba is not None


def njit(fn=None, **kwargs):
    """``numba.njit(cache=True)`` when enabled, identity otherwise."""
    kwargs.setdefault("cache", True)

    def wrap(f):
        if _numba is None:
            return f
        return _numba.njit(**kwargs)(f)

    if fn is not None:
        return wrap(fn)
    return wrap


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"

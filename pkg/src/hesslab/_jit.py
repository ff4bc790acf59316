"""Numba switch.

Set ``HESSLAB_NUMBA=0`` to run every kernel as plain Python/numpy.  The
decision is made once at import time; both paths execute the same source.
"""

import os

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

USE_NUMBA = _HAVE_NUMBA and os.environ.get("HESSLAB_NUMBA", "1").strip().lower() not in {
    "0",
    "false",
    "no",
    "off",
}


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` when enabled, identity otherwise."""
    if args and callable(args[0]) and len(args) == 1 and not kwargs:
        fn = args[0]
        return numba.njit(cache=True)(fn) if USE_NUMBA else fn

    def deco(fn):
        if not USE_NUMBA:
            return fn
        kwargs.setdefault("cache", True)
        return numba.njit(**kwargs)(fn)

    return deco


def backend() -> str:
    return "numba" if USE_NUMBA else "python"

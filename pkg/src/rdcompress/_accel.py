"""Numba switch for the hot kernels.

Set ``RDCOMPRESS_NO_NUMBA=1`` (or run without numba installed) to use the
pure-numpy implementations in :mod:`rdcompress.kernels`. The flag is read at
import time.
"""

import os

_FLAG = "RDCOMPRESS_NO_NUMBA"


def _env_disabled():
    return os.environ.get(_FLAG, "").strip().lower() in ("1", "true", "yes", "on")


try:
    if _env_disabled():
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    _njit = None
    HAVE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when numba is active, identity otherwise."""
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn
    kwargs.setdefault("cache", True)
    return _njit(*args, **kwargs)


def backend():
    return "numba" if HAVE_NUMBA else "numpy"

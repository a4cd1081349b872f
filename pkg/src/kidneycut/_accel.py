"""Numba acceleration shim.

Hot kernels are written as plain-Python loops decorated with ``@njit``.
Setting ``KIDNEYCUT_NO_NUMBA=1`` (or if numba is unavailable) routes every
caller to the vectorized numpy fallbacks instead; the decorated loop
functions then remain importable but interpreted.
"""

import os

NUMBA_DISABLED = os.environ.get("KIDNEYCUT_NO_NUMBA", "").lower() in ("1", "true", "yes")

try:
    if NUMBA_DISABLED:
        raise ImportError("numba disabled via KIDNEYCUT_NO_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(func):
            return func

        return wrap


def use_numba() -> bool:
    """True when jitted kernels are the active backend."""
    return HAVE_NUMBA

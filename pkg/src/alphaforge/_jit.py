"""Optional numba acceleration.

Set ``ALPHAFORGE_NO_NUMBA=1`` to run every kernel through its pure-numpy
path. The flag is read once at import time.
"""
import os

try:
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("ALPHAFORGE_NO_NUMBA", "0") not in ("1", "true", "yes")


def optional_njit(*args, **kwargs):
    """``numba.njit`` when enabled, identity otherwise.

    Usable bare (``@optional_njit``) or with options (``@optional_njit(fastmath=False)``).
    """
    kwargs.setdefault("cache", True)
    if len(args) == 1 and callable(args[0]) and not kwargs.keys() - {"cache"}:
        func, args = args[0], ()
        return optional_njit(**kwargs)(func)

    def decorator(func):
        if USE_NUMBA:
            return _njit(*args, **kwargs)(func)
        return func

    return decorator

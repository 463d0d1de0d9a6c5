"""Backend selection for the hot simulation kernels.

Set ``ANYDISPATCH_DISABLE_NUMBA=1`` (any of 1/true/yes) before import to force
the pure-numpy path. When numba is not installed the numpy path is used
automatically.
"""

import os

_FLAG = "ANYDISPATCH_DISABLE_NUMBA"


def _env_disabled():
    return os.environ.get(_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


try:
    import numba as _numba
except ImportError:  # pragma: no cover - depends on environment
    _numba = None

HAVE_NUMBA = _numba is not None
USE_NUMBA = HAVE_NUMBA and not _env_disabled()


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, otherwise a no-op decorator.

    The jitted loop kernels are always compiled when numba exists, even if the
    env flag selects numpy; the flag only decides which backend is exported.
    """
    if _numba is None:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn
    return _numba.njit(*args, **kwargs)

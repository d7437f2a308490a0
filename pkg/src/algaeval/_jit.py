"""Numba switch.

Set ``ALGAEVAL_NO_JIT=1`` to run every hot kernel through its pure-numpy
implementation instead of the compiled one. Numba is also skipped if it
cannot be imported.
"""

import os

_FLAG = os.environ.get("ALGAEVAL_NO_JIT", "").strip().lower()

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

HAVE_NUMBA = _numba is not None
USE_JIT = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise an identity decorator."""
    if HAVE_NUMBA:
        return _numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(func):
        return func

    return wrap

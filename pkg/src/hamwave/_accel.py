"""Optional numba acceleration.

Set ``HAMWAVE_DISABLE_NUMBA=1`` to force the pure-numpy code paths. The
flag is read once at import time.
"""

import os

_FLAG = os.environ.get("HAMWAVE_DISABLE_NUMBA", "").strip().lower()
DISABLED = _FLAG not in ("", "0", "false", "no")

HAVE_NUMBA = False
if not DISABLED:
    try:
        from numba import njit  # noqa: F401

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        HAVE_NUMBA = False

if not HAVE_NUMBA:

    def njit(*args, **kwargs):
        """No-op stand-in for ``numba.njit``."""
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap


def backend():
    return "numba" if HAVE_NUMBA else "numpy"

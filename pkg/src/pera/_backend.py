"""Kernel backend selection.

Hot loops are compiled with numba when it is importable. Setting
``PERA_DISABLE_NUMBA=1`` in the environment before import forces the
pure-numpy path, which is also used automatically when numba is missing.
"""

import os

_disabled = os.environ.get("PERA_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _disabled


def njit(fn):
    """Compile ``fn`` with numba if available, else return it unchanged."""
    if HAVE_NUMBA:
        return _njit(cache=True, nogil=True)(fn)
    return fn


def backend_name():
    return "numba" if USE_NUMBA else "numpy"

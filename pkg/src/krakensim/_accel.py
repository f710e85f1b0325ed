"""Backend selection for the numeric kernels.

Set ``KRAKENSIM_DISABLE_NUMBA=1`` to force the pure-numpy path. The flag is
read once at import time; ``krakensim.kernels`` exposes both variants of
every kernel so the two can be compared in one process.
"""

import os

_FLAG = os.environ.get("KRAKENSIM_DISABLE_NUMBA", "").strip().lower()
DISABLED = _FLAG in ("1", "true", "yes", "on")

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

HAVE_NUMBA = _numba is not None
USE_NUMBA = HAVE_NUMBA and not DISABLED


def njit(fn):
    """Compile ``fn`` with numba when available, else return it unchanged."""
    if not HAVE_NUMBA:
        return fn
    return _numba.njit(cache=True, nogil=True)(fn)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"

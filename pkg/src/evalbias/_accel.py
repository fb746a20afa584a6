"""Numba switch.

Set ``EVALBIAS_DISABLE_NUMBA=1`` to force the pure-numpy code paths, even
when numba is importable.  Kernels in :mod:`evalbias.kernels` come in pairs
(``*_numba`` / ``*_numpy``); the dispatchers pick one based on ``USE_NUMBA``.
"""

import os
import warnings

# numba warns about an old TBB at the first parallel call; the workqueue layer is used instead
warnings.filterwarnings("ignore", message="The TBB threading layer")

_FLAG = "EVALBIAS_DISABLE_NUMBA"

try:
    import numba as _numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get(_FLAG, "").strip().lower() not in {"1", "true", "yes", "on"}


if HAVE_NUMBA:
    from numba import njit, prange
else:  # pragma: no cover

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap

    prange = range


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"

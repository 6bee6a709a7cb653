"""Switch between numba-compiled kernels and their pure-numpy twins.

Set ``VISCOLAB_DISABLE_JIT=1`` to force the numpy path. Both paths are kept
importable so tests and the benchmark can compare them directly.
"""

from __future__ import annotations

import os
import warnings

os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None

_FALSY = {"", "0", "false", "no", "off"}

HAVE_NUMBA = numba is not None
JIT_ENABLED = HAVE_NUMBA and os.environ.get("VISCOLAB_DISABLE_JIT", "0").strip().lower() in _FALSY


def njit(*args, **kwargs):
    """``numba.njit`` with on-disk caching; identity decorator without numba."""
    kwargs.setdefault("cache", True)

    def wrap(func):
        if numba is None:
            return func
        return numba.njit(**kwargs)(func)

    if args and callable(args[0]):
        return wrap(args[0])
    return wrap


if numba is not None:
    prange = numba.prange
else:  # pragma: no cover
    prange = range


def max_threads() -> int:
    if numba is None:
        return 1
    return int(numba.config.NUMBA_NUM_THREADS)


def set_num_threads(k: int) -> int:
    """Set the numba worker count, clamped to what the runtime allows."""
    if numba is None:
        return 1
    if k < 1:
        raise ValueError("thread count must be >= 1")
    limit = max_threads()
    if k > limit:
        warnings.warn(
            f"requested {k} threads but numba allows {limit}; "
            "set NUMBA_NUM_THREADS before import to raise the limit",
            RuntimeWarning,
            stacklevel=2,
        )
        k = limit
    numba.set_num_threads(k)
    return k


def backend() -> str:
    return "numba" if JIT_ENABLED else "numpy"

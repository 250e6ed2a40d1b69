"""Numba switch.

Kernels are written once and compiled with ``numba.njit`` when numba is
importable and ``GRADLIM_DISABLE_NUMBA`` is unset (or ``0``).  Otherwise the
decorator is the identity and callers use the vectorized numpy paths.
"""

import os
from typing import Any, Callable


def _flag(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() not in ("", "0", "false", "no")


try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _flag("GRADLIM_DISABLE_NUMBA")


def njit(*args: Any, **kwargs: Any) -> Callable:
    """``numba.njit(cache=True, nogil=True)`` or a no-op when numba is off."""
    if USE_NUMBA:
        kwargs.setdefault("cache", True)
        kwargs.setdefault("nogil", True)
        return numba.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda f: f


def max_workers() -> int:
    """Worker cap from ``GRADLIM_THREADS`` (default: 1)."""
    raw = os.environ.get("GRADLIM_THREADS", "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"GRADLIM_THREADS must be a positive integer, got {raw!r}")

"""JIT switch for the numeric kernels.

Kernels are written once in a numba-compatible subset of Python/numpy. When
numba is importable and ``BATCHENS_DISABLE_NUMBA`` is unset (or ``0``), they
are compiled with ``numba.njit``; otherwise the same source runs as plain
numpy code. The flag is read once, at import time.
"""

from __future__ import annotations

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_FLAG = os.environ.get("BATCHENS_DISABLE_NUMBA", "").strip().lower()
NUMBA_DISABLED_BY_ENV = _FLAG not in ("", "0", "false", "no")
NUMBA_ENABLED = numba is not None and not NUMBA_DISABLED_BY_ENV


def jit(fn):
    """Compile ``fn`` with ``numba.njit(cache=True)`` when acceleration is on."""
    if NUMBA_ENABLED:
        return numba.njit(cache=True)(fn)
    return fn


def python_impl(fn):
    """Return the uncompiled Python function behind a (possibly) jitted kernel."""
    return getattr(fn, "py_func", fn)


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"

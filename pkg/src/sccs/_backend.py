"""Backend selection for the hot loops.

Kernels are written twice: a numba ``@njit`` version and a vectorised numpy
version.  The numba path is used when numba imports cleanly and the
``SCCS_DISABLE_NUMBA`` environment variable is unset (or ``0``).  Any call
that accepts ``backend=`` may override the choice explicitly.
"""

from __future__ import annotations

import os

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

NUMBA_AVAILABLE = _numba is not None

_flag = os.environ.get("SCCS_DISABLE_NUMBA", "").strip().lower()
NUMBA_ENABLED = NUMBA_AVAILABLE and _flag in ("", "0", "false", "no")

BACKENDS = ("numba", "numpy")


def default_backend() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"


def resolve_backend(backend: str | None) -> str:
    if backend is None:
        return default_backend()
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    if backend == "numba" and not NUMBA_AVAILABLE:
        raise RuntimeError("numba backend requested but numba is not importable")
    return backend


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise an identity decorator.

    Compilation is lazy, so defining kernels costs nothing on the numpy path.
    """
    kwargs.setdefault("cache", True)
    if _numba is None:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    return _numba.njit(*args, **kwargs)

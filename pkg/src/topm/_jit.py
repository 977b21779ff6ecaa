"""Backend selection: numba-jitted kernels or the identical pure-numpy source.

Set ``TOPM_DISABLE_NUMBA=1`` in the environment *before importing* to skip
jitting entirely; every kernel then runs as the plain function it is written
as.  This is the fallback path and the reference point for backend-equivalence
tests and benchmarks.
"""

from __future__ import annotations

import os

_TRUTHY = {"1", "true", "yes", "on"}


def _disabled_by_env() -> bool:
    return os.environ.get("TOPM_DISABLE_NUMBA", "").strip().lower() in _TRUTHY


NUMBA_ENABLED = False
_numba_njit = None

if not _disabled_by_env():
    try:
        from numba import njit as _numba_njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _numba_njit = None


def njit(*args, **kwargs):
    """numba.njit when the backend is active, identity decorator otherwise."""
    if NUMBA_ENABLED:
        return _numba_njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]

    def passthrough(func):
        return func

    return passthrough


def active_backend() -> str:
    """Name of the backend compiled kernels run on: 'numba' or 'numpy'."""
    return "numba" if NUMBA_ENABLED else "numpy"

"""JIT switch for the hot kernels.

Kernels are written in the subset of Python that numba compiles. Setting
``STABLEWEB_DISABLE_JIT=1`` (or running without numba installed) leaves them
as plain Python functions operating on numpy arrays, which is slow but
produces bit-identical results.
"""

import os

try:
    import numba as _nb
except ImportError:  # pragma: no cover - numba is a declared dependency
    _nb = None

JIT_ENABLED = _nb is not None and os.environ.get("STABLEWEB_DISABLE_JIT", "") in ("", "0")


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, identity decorator otherwise."""
    if JIT_ENABLED:
        kwargs.setdefault("cache", True)
        kwargs.setdefault("nogil", True)
        return _nb.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn

"""Switch between numba-compiled kernels and the plain-Python fallback.

Set ``WSLSIM_DISABLE_JIT=1`` before importing :mod:`wslsim` to run every
kernel as ordinary Python over numpy arrays.  Results are bit-identical in
both modes; only speed differs.
"""
import os

JIT_ENABLED = os.environ.get("WSLSIM_DISABLE_JIT", "").strip().lower() not in (
    "1",
    "true",
    "yes",
)

if JIT_ENABLED:
    try:
        from numba import njit as _numba_njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        JIT_ENABLED = False

if JIT_ENABLED:

    def njit(*args, **kwargs):
        kwargs.setdefault("cache", True)
        return _numba_njit(*args, **kwargs)

else:

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap

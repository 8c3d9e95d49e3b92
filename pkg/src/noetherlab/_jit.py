"""Optional numba acceleration for the numeric kernels.

Kernels are written in the numba-compatible subset of Python/numpy and
decorated with :func:`njit`.  When numba is missing, or when the
environment variable ``NOETHERLAB_DISABLE_JIT`` is set to a truthy value
before import, the decorator returns the plain Python function, so every
kernel also runs as ordinary numpy code.
"""
import os

_FALSY = ("", "0", "false", "no", "off")

DISABLE_JIT = os.environ.get("NOETHERLAB_DISABLE_JIT", "").strip().lower() not in _FALSY

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

JIT_ENABLED = (_numba is not None) and not DISABLE_JIT


def njit(*args, **kwargs):
    """``numba.njit`` when acceleration is enabled, identity otherwise.

    Usable both bare (``@njit``) and with options (``@njit(cache=True)``).
    """
    if args and callable(args[0]) and len(args) == 1 and not kwargs:
        fn = args[0]
        if JIT_ENABLED:
            return _numba.njit(cache=True)(fn)
        return fn

    def wrap(fn):
        if JIT_ENABLED:
            opts = {"cache": True}
            opts.update(kwargs)
            return _numba.njit(*args, **opts)(fn)
        return fn

    return wrap


def backend():
    """Name of the active kernel backend (``"numba"`` or ``"python"``)."""
    return "numba" if JIT_ENABLED else "python"

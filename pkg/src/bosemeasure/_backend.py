"""Backend selection for the hot kernels.

Set ``BOSEMEASURE_BACKEND=numpy`` to bypass numba and run the pure-numpy
implementations. Unset or ``numba`` uses numba when it imports; any other
value is rejected.
"""
import os

ENV_FLAG = "BOSEMEASURE_BACKEND"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def requested_backend():
    value = os.environ.get(ENV_FLAG, "numba").strip().lower()
    if value not in ("numba", "numpy"):
        raise ValueError(f"{ENV_FLAG} must be 'numba' or 'numpy', got {value!r}")
    return value


def use_numba():
    return HAVE_NUMBA and requested_backend() == "numba"


def njit(*args, **kwargs):
    """``numba.njit`` with caching, or a no-op decorator without numba."""
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda fn: fn
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)

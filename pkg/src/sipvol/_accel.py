"""Backend selection for the numeric kernels.

Set ``SIPVOL_BACKEND=numpy`` to force the pure-numpy path. Any other value
(or unset) uses numba when it is importable.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def requested_backend() -> str:
    value = os.environ.get("SIPVOL_BACKEND", "numba").strip().lower()
    if value not in ("numba", "numpy"):
        raise ValueError(f"SIPVOL_BACKEND must be 'numba' or 'numpy', got {value!r}")
    return value


def use_numba() -> bool:
    return HAVE_NUMBA and requested_backend() == "numba"


def njit(func=None, **kwargs):
    """``numba.njit`` with cache on; identity decorator without numba."""
    kwargs.setdefault("cache", True)

    def wrap(f):
        if not HAVE_NUMBA:
            return f
        return numba.njit(**kwargs)(f)

    if func is not None:
        return wrap(func)
    return wrap

"""Backend selection for the hot numeric kernels.

Set ``CKA_RATE_BACKEND=numpy`` to run every kernel through the vectorized
numpy path; the default is ``numba`` when it can be imported.
"""

import os

_requested = os.environ.get("CKA_RATE_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"CKA_RATE_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
BACKEND = "numba" if (_requested == "numba" and HAVE_NUMBA) else "numpy"


def jit(func):
    """Compile ``func`` with ``numba.njit`` when numba is importable.

    Kernels are compiled whenever numba exists so the benchmark can compare
    both paths in one process; ``BACKEND`` only decides which path the public
    API dispatches to.
    """
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def resolve(backend=None):
    backend = BACKEND if backend is None else backend
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend

"""Select the simplex iteration kernel at import time.

The compiled core is used when it was built; setting the environment
variable ``SNAPVERIFY_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from . import _simplex_py

BACKEND = "python"
iterate = _simplex_py.iterate

if os.environ.get("SNAPVERIFY_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _simplex_core
    except ImportError:  # extension not built
        pass
    else:
        iterate = _simplex_core.iterate
        BACKEND = "cython"


def get_iterate(backend=None):
    """Return the iteration kernel for ``backend`` ('python', 'cython' or None)."""
    if backend is None:
        return iterate
    if backend == "python":
        return _simplex_py.iterate
    if backend == "cython":
        from . import _simplex_core
        return _simplex_core.iterate
    raise ValueError(f"unknown simplex backend {backend!r}")

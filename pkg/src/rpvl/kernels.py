"""Backend selection for the batch inner-problem kernels.

The compiled extension is used when it imports; set ``RPVL_PURE_PYTHON=1``
to force the numpy fallback.  Both backends expose the same functions.
"""
import os

from rpvl import _pykernels

python_backend = _pykernels

try:
    if os.environ.get("RPVL_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from rpvl import _ckernels as compiled_backend
except ImportError:
    compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND_NAME = "cython" if compiled_backend is not None else "python"


def get_backend(name=None):
    """Return the kernel module called ``name`` ("cython" or "python")."""
    if name is None:
        return backend
    if name == "python":
        return python_backend
    if name == "cython":
        if compiled_backend is None:
            raise RuntimeError("compiled kernels are not built")
        return compiled_backend
    raise ValueError(f"unknown backend {name!r}")

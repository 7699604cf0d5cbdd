"""Backend selection for the small-matrix kernels.

The compiled extension is used when it was built; otherwise, or when
``FREECONV_PURE_PYTHON`` is set to a non-empty value other than ``0``, the
numpy implementation in :mod:`freeconv._kernels_py` is used.
"""
import importlib
import os

__all__ = ["BACKEND", "lu_inv", "jacobi_eigh", "hqr_eigvals", "load_backend"]


def load_backend(name):
    """Return the kernel module for ``"cython"`` or ``"python"``."""
    if name == "cython":
        return importlib.import_module("freeconv._kernels")
    if name == "python":
        return importlib.import_module("freeconv._kernels_py")
    raise ValueError(f"unknown kernel backend {name!r}")


def _select():
    if os.environ.get("FREECONV_PURE_PYTHON", "") not in ("", "0"):
        return "python", load_backend("python")
    try:
        return "cython", load_backend("cython")
    except ImportError:
        return "python", load_backend("python")


BACKEND, _mod = _select()
lu_inv = _mod.lu_inv
jacobi_eigh = _mod.jacobi_eigh
hqr_eigvals = _mod.hqr_eigvals

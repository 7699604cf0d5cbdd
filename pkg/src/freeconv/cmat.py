"""Dense complex matrix kernel.

Matrices are plain ``complex128`` numpy arrays.  Every function accepts a
single ``(n, n)`` matrix or a stack ``(..., n, n)``; the heavy lifting is
done by :mod:`freeconv.kernels` (compiled when available).
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConvergenceError, NotHermitianError, SingularMatrixError

__all__ = [
    "HalfPlaneReport",
    "as_cmatrix",
    "adjoint",
    "inv",
    "imag_part",
    "min_imag_eig",
    "uhp_check",
    "eig_herm",
    "eig_general",
]


@dataclass(frozen=True)
class HalfPlaneReport:
    """Membership of ``b`` in the operator upper half-plane.

    ``in_upper`` holds exactly when ``min_imag_eig`` (smallest eigenvalue of
    ``(b - b*) / 2i``) is positive.
    """

    in_upper: bool
    min_imag_eig: float


def as_cmatrix(a):
    """Validate and convert to a square, finite ``complex128`` array."""
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def adjoint(a):
    return np.conj(np.swapaxes(a, -1, -2))


def _stack(a):
    a = np.asarray(a, dtype=np.complex128)
    n = a.shape[-1]
    return np.ascontiguousarray(a.reshape(-1, n, n)), a.shape


def inv(a, check_finite=True):
    """Inverse by LU with partial pivoting.

    Raises :class:`SingularMatrixError` when a pivot falls below
    ``n * eps * ||a||_F``.
    """
    if check_finite:
        a = as_cmatrix(a)
    flat, shape = _stack(a)
    out, info = kernels.lu_inv(flat)
    if info.any():
        bad = int(np.flatnonzero(info)[0])
        raise SingularMatrixError(
            f"matrix {bad} of the stack is singular to working precision "
            f"(pivot column {int(info[bad]) - 1})"
        )
    return out.reshape(shape)


def imag_part(b):
    """Hermitian matrix ``(b - b*) / 2i``."""
    return (b - adjoint(b)) / 2j


def min_imag_eig(b):
    """Smallest eigenvalue of ``(b - b*) / 2i`` for each matrix of a stack."""
    flat, shape = _stack(b)
    w, _, _ = kernels.jacobi_eigh(np.ascontiguousarray(imag_part(flat)), False)
    return w[:, 0].reshape(shape[:-2])


def uhp_check(b):
    b = as_cmatrix(b)
    if b.ndim != 2:
        raise ValueError("uhp_check takes a single matrix; use min_imag_eig for stacks")
    m = float(min_imag_eig(b))
    return HalfPlaneReport(in_upper=m > 0.0, min_imag_eig=m)


def eig_herm(a, tol=1e-12):
    """Eigenvalues (ascending) and unitary eigenvectors by cyclic Jacobi."""
    a = as_cmatrix(a)
    scale = max(np.linalg.norm(a), np.finfo(float).tiny)
    if np.linalg.norm(a - adjoint(a)) > tol * scale:
        raise NotHermitianError("eig_herm needs a Hermitian matrix")
    flat, shape = _stack(a)
    w, v, info = kernels.jacobi_eigh(flat, True)
    if info.any():
        raise ConvergenceError("Jacobi sweeps did not converge")
    return w.reshape(shape[:-1]), v.reshape(shape)


def eig_general(a, maxit=60):
    """Eigenvalues of a general complex matrix (Hessenberg + shifted QR)."""
    a = as_cmatrix(a)
    flat, shape = _stack(a)
    w, info = kernels.hqr_eigvals(flat, maxit)
    if info.any():
        raise ConvergenceError("QR iteration exceeded its iteration cap")
    return w.reshape(shape[:-1])

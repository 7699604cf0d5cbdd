# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled small-matrix kernels.

Every routine works on a stack of square complex matrices ``(P, n, n)`` and
loops over the stack without the GIL.  Signatures and return conventions are
shared with :mod:`freeconv._kernels_py`, the numpy fallback.
"""
import numpy as np

from libc.math cimport sqrt, fabs, hypot
from libc.float cimport DBL_EPSILON
from libc.stdlib cimport malloc, free

cdef extern from "complex.h" nogil:
    double complex csqrt(double complex)


cdef inline double cabs2(double complex z) noexcept nogil:
    return z.real * z.real + z.imag * z.imag


cdef inline double cabs(double complex z) noexcept nogil:
    return hypot(z.real, z.imag)


cdef inline double complex cconj(double complex z) noexcept nogil:
    return z.real - 1j * z.imag


def lu_inv(const double complex[:, :, ::1] a, double rtol=1.0):
    """Invert every matrix of the stack by LU with partial pivoting.

    Returns ``(inv, info)``; ``info[p] = k + 1`` flags a pivot at column ``k``
    below ``rtol * n * eps * ||a[p]||_F`` (that slot of ``inv`` is garbage).
    """
    cdef Py_ssize_t P = a.shape[0], n = a.shape[1]
    out = np.empty((P, n, n), dtype=np.complex128)
    info = np.zeros(P, dtype=np.intp)
    cdef double complex[:, :, ::1] o = out
    cdef Py_ssize_t[::1] inf = info
    cdef double complex* lu = <double complex*> malloc(n * n * sizeof(double complex))
    cdef Py_ssize_t* perm = <Py_ssize_t*> malloc(n * sizeof(Py_ssize_t))
    cdef Py_ssize_t p, i, j, k, r, c
    cdef double frob, thresh, best, mag
    cdef double complex tmp, f, acc
    try:
        with nogil:
            for p in range(P):
                frob = 0.0
                for i in range(n):
                    perm[i] = i
                    for j in range(n):
                        lu[i * n + j] = a[p, i, j]
                        frob = frob + cabs2(a[p, i, j])
                thresh = rtol * n * DBL_EPSILON * sqrt(frob)
                for k in range(n):
                    r = k
                    best = cabs(lu[k * n + k])
                    for i in range(k + 1, n):
                        mag = cabs(lu[i * n + k])
                        if mag > best:
                            best = mag
                            r = i
                    if best <= thresh:
                        inf[p] = k + 1
                        break
                    if r != k:
                        for j in range(n):
                            tmp = lu[k * n + j]
                            lu[k * n + j] = lu[r * n + j]
                            lu[r * n + j] = tmp
                        c = perm[k]
                        perm[k] = perm[r]
                        perm[r] = c
                    for i in range(k + 1, n):
                        f = lu[i * n + k] / lu[k * n + k]
                        lu[i * n + k] = f
                        for j in range(k + 1, n):
                            lu[i * n + j] = lu[i * n + j] - f * lu[k * n + j]
                if inf[p] != 0:
                    continue
                # column c of the inverse solves L U x = e_c permuted
                for c in range(n):
                    for i in range(n):
                        acc = 1.0 if perm[i] == c else 0.0
                        for j in range(i):
                            acc = acc - lu[i * n + j] * o[p, j, c]
                        o[p, i, c] = acc
                    for i in range(n - 1, -1, -1):
                        acc = o[p, i, c]
                        for j in range(i + 1, n):
                            acc = acc - lu[i * n + j] * o[p, j, c]
                        o[p, i, c] = acc / lu[i * n + i]
    finally:
        free(lu)
        free(perm)
    return out, info


cdef int _jacobi(double complex* A, Py_ssize_t n, double* w,
                 double complex* V, bint vecs, int max_sweeps) noexcept nogil:
    cdef Py_ssize_t i, j, k, p, q
    cdef double frob = 0.0, off, mag, app, aqq, tau, t, c, s
    cdef double complex ph, x, y
    cdef int sweep, status = -1
    for i in range(n):
        for j in range(n):
            frob = frob + cabs2(A[i * n + j])
            if vecs:
                V[i * n + j] = 1.0 if i == j else 0.0
    for sweep in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off = off + cabs2(A[i * n + j])
        if off <= DBL_EPSILON * DBL_EPSILON * frob * 1e-2 or off == 0.0:
            status = 0
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                mag = cabs(A[p * n + q])
                if mag == 0.0:
                    continue
                app = A[p * n + p].real
                aqq = A[q * n + q].real
                tau = (aqq - app) / (2.0 * mag)
                if tau >= 0:
                    t = 1.0 / (tau + hypot(1.0, tau))
                else:
                    t = -1.0 / (-tau + hypot(1.0, tau))
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                ph = A[p * n + q] / mag
                for k in range(n):
                    x = A[k * n + p]
                    y = A[k * n + q]
                    A[k * n + p] = c * x - s * cconj(ph) * y
                    A[k * n + q] = s * x + c * cconj(ph) * y
                for k in range(n):
                    x = A[p * n + k]
                    y = A[q * n + k]
                    A[p * n + k] = c * x - s * ph * y
                    A[q * n + k] = s * x + c * ph * y
                A[p * n + q] = 0.0
                A[q * n + p] = 0.0
                A[p * n + p] = app - t * mag
                A[q * n + q] = aqq + t * mag
                if vecs:
                    for k in range(n):
                        x = V[k * n + p]
                        y = V[k * n + q]
                        V[k * n + p] = c * x - s * cconj(ph) * y
                        V[k * n + q] = s * x + c * cconj(ph) * y
    for i in range(n):
        w[i] = A[i * n + i].real
    return status


def jacobi_eigh(const double complex[:, :, ::1] a, bint vectors=True,
                int max_sweeps=60):
    """Cyclic Jacobi eigensolver for a stack of Hermitian matrices.

    Returns ``(w, v, info)`` with eigenvalues ascending; ``v`` is ``None``
    when ``vectors`` is false; ``info[p] = 1`` when the sweep cap was hit.
    """
    cdef Py_ssize_t P = a.shape[0], n = a.shape[1]
    w_out = np.empty((P, n), dtype=np.float64)
    v_out = np.empty((P, n, n), dtype=np.complex128) if vectors else None
    info = np.zeros(P, dtype=np.intp)
    cdef double[:, ::1] wv = w_out
    cdef double complex[:, :, ::1] vv
    if vectors:
        vv = v_out
    cdef Py_ssize_t[::1] inf = info
    cdef double complex* A = <double complex*> malloc(n * n * sizeof(double complex))
    cdef double complex* V = <double complex*> malloc(n * n * sizeof(double complex))
    cdef double* w = <double*> malloc(n * sizeof(double))
    cdef Py_ssize_t* order = <Py_ssize_t*> malloc(n * sizeof(Py_ssize_t))
    cdef Py_ssize_t p, i, j, key
    cdef double kv
    try:
        with nogil:
            for p in range(P):
                for i in range(n):
                    for j in range(n):
                        # enforce exact Hermitian symmetry from the upper triangle
                        if j >= i:
                            A[i * n + j] = a[p, i, j]
                        else:
                            A[i * n + j] = cconj(a[p, j, i])
                    A[i * n + i] = A[i * n + i].real
                if _jacobi(A, n, w, V, vectors, max_sweeps) != 0:
                    inf[p] = 1
                # insertion sort of indices by eigenvalue
                for i in range(n):
                    order[i] = i
                for i in range(1, n):
                    key = order[i]
                    kv = w[key]
                    j = i - 1
                    while j >= 0 and w[order[j]] > kv:
                        order[j + 1] = order[j]
                        j = j - 1
                    order[j + 1] = key
                for i in range(n):
                    wv[p, i] = w[order[i]]
                    if vectors:
                        for j in range(n):
                            vv[p, j, i] = V[j * n + order[i]]
    finally:
        free(A)
        free(V)
        free(w)
        free(order)
    return w_out, v_out, info


cdef void _hessenberg(double complex* H, Py_ssize_t n, double complex* v) noexcept nogil:
    cdef Py_ssize_t k, i, j
    cdef double nrm, x0a
    cdef double complex alpha, dot
    for k in range(n - 2):
        nrm = 0.0
        for i in range(k + 1, n):
            nrm = nrm + cabs2(H[i * n + k])
        nrm = sqrt(nrm)
        if nrm == 0.0:
            continue
        x0a = cabs(H[(k + 1) * n + k])
        if x0a == 0.0:
            alpha = -nrm
        else:
            alpha = -(H[(k + 1) * n + k] / x0a) * nrm
        for i in range(k + 1, n):
            v[i] = H[i * n + k]
        v[k + 1] = v[k + 1] - alpha
        nrm = 0.0
        for i in range(k + 1, n):
            nrm = nrm + cabs2(v[i])
        nrm = sqrt(nrm)
        if nrm == 0.0:
            continue
        for i in range(k + 1, n):
            v[i] = v[i] / nrm
        # H <- (I - 2 v v*) H
        for j in range(k, n):
            dot = 0.0
            for i in range(k + 1, n):
                dot = dot + cconj(v[i]) * H[i * n + j]
            for i in range(k + 1, n):
                H[i * n + j] = H[i * n + j] - 2.0 * v[i] * dot
        # H <- H (I - 2 v v*)
        for i in range(n):
            dot = 0.0
            for j in range(k + 1, n):
                dot = dot + H[i * n + j] * v[j]
            for j in range(k + 1, n):
                H[i * n + j] = H[i * n + j] - 2.0 * dot * cconj(v[j])
        for i in range(k + 2, n):
            H[i * n + k] = 0.0


cdef int _hqr(double complex* H, Py_ssize_t n, double complex* ev,
              double complex* cs, double complex* sn, int maxit) noexcept nogil:
    cdef Py_ssize_t hi = n - 1, l, k, j, top
    cdef int its = 0
    cdef double s, anorm = 0.0, r
    cdef double complex a, b, c, d, disc, m1, m2, mu, x, y, cc, ss
    for k in range(n * n):
        anorm = anorm + cabs2(H[k])
    anorm = sqrt(anorm)
    while hi >= 0:
        if hi == 0:
            ev[0] = H[0]
            break
        l = hi
        while l > 0:
            s = cabs(H[(l - 1) * n + l - 1]) + cabs(H[l * n + l])
            if s == 0.0:
                s = anorm
            if cabs(H[l * n + l - 1]) <= DBL_EPSILON * s:
                H[l * n + l - 1] = 0.0
                break
            l = l - 1
        if l == hi:
            ev[hi] = H[hi * n + hi]
            hi = hi - 1
            its = 0
            continue
        its = its + 1
        if its > maxit:
            return -1
        if its % 11 == 10:
            mu = H[hi * n + hi] + 0.75 * cabs(H[hi * n + hi - 1])
        else:
            a = H[(hi - 1) * n + hi - 1]
            b = H[(hi - 1) * n + hi]
            c = H[hi * n + hi - 1]
            d = H[hi * n + hi]
            disc = csqrt(0.25 * (a - d) * (a - d) + b * c)
            m1 = 0.5 * (a + d) + disc
            m2 = 0.5 * (a + d) - disc
            mu = m1 if cabs(m1 - d) <= cabs(m2 - d) else m2
        for k in range(l, hi + 1):
            H[k * n + k] = H[k * n + k] - mu
        for k in range(l, hi):
            x = H[k * n + k]
            y = H[(k + 1) * n + k]
            r = sqrt(cabs2(x) + cabs2(y))
            if r == 0.0:
                cc = 1.0
                ss = 0.0
            else:
                cc = x / r
                ss = y / r
            cs[k] = cc
            sn[k] = ss
            for j in range(k, hi + 1):
                x = H[k * n + j]
                y = H[(k + 1) * n + j]
                H[k * n + j] = cconj(cc) * x + cconj(ss) * y
                H[(k + 1) * n + j] = -ss * x + cc * y
        for k in range(l, hi):
            cc = cs[k]
            ss = sn[k]
            top = k + 2 if k + 2 < hi else hi
            for j in range(l, top + 1):
                x = H[j * n + k]
                y = H[j * n + k + 1]
                H[j * n + k] = x * cc + y * ss
                H[j * n + k + 1] = -x * cconj(ss) + y * cconj(cc)
        for k in range(l, hi + 1):
            H[k * n + k] = H[k * n + k] + mu
    return 0


def hqr_eigvals(const double complex[:, :, ::1] a, int maxit=60):
    """Eigenvalues of a stack of general complex matrices.

    Householder reduction to Hessenberg form, then single-shift QR with
    Wilkinson shifts.  ``info[p] = 1`` marks an iteration-cap failure.
    """
    cdef Py_ssize_t P = a.shape[0], n = a.shape[1]
    out = np.empty((P, n), dtype=np.complex128)
    info = np.zeros(P, dtype=np.intp)
    cdef double complex[:, ::1] ov = out
    cdef Py_ssize_t[::1] inf = info
    cdef double complex* H = <double complex*> malloc(max(n * n, 1) * sizeof(double complex))
    cdef double complex* work = <double complex*> malloc(max(3 * n, 1) * sizeof(double complex))
    cdef Py_ssize_t p, i, j
    try:
        with nogil:
            for p in range(P):
                for i in range(n):
                    for j in range(n):
                        H[i * n + j] = a[p, i, j]
                _hessenberg(H, n, work)
                if _hqr(H, n, &work[0], &work[n], &work[2 * n], maxit) != 0:
                    inf[p] = 1
                for i in range(n):
                    ov[p, i] = work[i]
    finally:
        free(H)
        free(work)
    return out, info

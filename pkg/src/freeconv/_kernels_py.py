"""Pure numpy fallback for the compiled kernels in ``_kernels.pyx``.

Same algorithms, same signatures.  LU and Jacobi are vectorised across the
stack; the QR eigenvalue iteration runs per matrix.
"""
import numpy as np

_EPS = np.finfo(float).eps


def lu_inv(a, rtol=1.0):
    a = np.ascontiguousarray(a, dtype=np.complex128)
    P, n, _ = a.shape
    lu = a.copy()
    info = np.zeros(P, dtype=np.intp)
    perm = np.tile(np.arange(n), (P, 1))
    thresh = rtol * n * _EPS * np.sqrt(np.einsum("pij,pij->p", a, a.conj()).real)
    rows = np.arange(P)
    for k in range(n):
        r = k + np.argmax(np.abs(lu[:, k:, k]), axis=1)
        best = np.abs(lu[rows, r, k])
        bad = (best <= thresh) & (info == 0)
        info[bad] = k + 1
        # failed slots keep going on a harmless identity pivot
        lu[bad, k, :] = 0.0
        lu[bad, k, k] = 1.0
        r[bad] = k
        swap = r != k
        if swap.any():
            idx = rows[swap]
            top = lu[idx, k, :].copy()
            lu[idx, k, :] = lu[idx, r[swap], :]
            lu[idx, r[swap], :] = top
            ptop = perm[idx, k].copy()
            perm[idx, k] = perm[idx, r[swap]]
            perm[idx, r[swap]] = ptop
        if k + 1 < n:
            f = lu[:, k + 1:, k] / lu[:, k, k][:, None]
            lu[:, k + 1:, k] = f
            lu[:, k + 1:, k + 1:] -= f[:, :, None] * lu[:, k, None, k + 1:]
    out = np.zeros((P, n, n), dtype=np.complex128)
    out[rows[:, None], np.arange(n)[None, :], perm] = 1.0
    for i in range(n):
        out[:, i, :] -= np.einsum("pj,pjc->pc", lu[:, i, :i], out[:, :i, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        for i in range(n - 1, -1, -1):
            out[:, i, :] -= np.einsum("pj,pjc->pc", lu[:, i, i + 1:], out[:, i + 1:, :])
            out[:, i, :] /= lu[:, i, i][:, None]
    return out, info


def jacobi_eigh(a, vectors=True, max_sweeps=60):
    a = np.asarray(a, dtype=np.complex128)
    P, n, _ = a.shape
    upper = np.triu(a)
    A = upper + np.conj(np.swapaxes(np.triu(a, 1), 1, 2))
    idx = np.arange(n)
    A[:, idx, idx] = A[:, idx, idx].real
    V = np.tile(np.eye(n, dtype=np.complex128), (P, 1, 1)) if vectors else None
    frob = np.einsum("pij,pij->p", A, A.conj()).real
    info = np.ones(P, dtype=np.intp)
    iu = np.triu_indices(n, 1)
    for _ in range(max_sweeps):
        off = np.sum(np.abs(A[:, iu[0], iu[1]]) ** 2, axis=1)
        done = (off <= _EPS * _EPS * frob * 1e-2) | (off == 0.0)
        info[done] = 0
        if done.all():
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[:, p, q]
                mag = np.abs(apq)
                live = mag > 0.0
                if not live.any():
                    continue
                safe = np.where(live, mag, 1.0)
                app = A[:, p, p].real.copy()
                aqq = A[:, q, q].real.copy()
                tau = (aqq - app) / (2.0 * safe)
                t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
                t = np.where(live, t, 0.0)
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                ph = np.where(live, apq / safe, 1.0)
                x = A[:, :, p].copy()
                y = A[:, :, q]
                A[:, :, p] = c[:, None] * x - (s * ph.conj())[:, None] * y
                A[:, :, q] = s[:, None] * x + (c * ph.conj())[:, None] * y
                x = A[:, p, :].copy()
                y = A[:, q, :]
                A[:, p, :] = c[:, None] * x - (s * ph)[:, None] * y
                A[:, q, :] = s[:, None] * x + (c * ph)[:, None] * y
                A[:, p, q] = 0.0
                A[:, q, p] = 0.0
                A[:, p, p] = app - t * mag
                A[:, q, q] = aqq + t * mag
                if vectors:
                    x = V[:, :, p].copy()
                    y = V[:, :, q]
                    V[:, :, p] = c[:, None] * x - (s * ph.conj())[:, None] * y
                    V[:, :, q] = s[:, None] * x + (c * ph.conj())[:, None] * y
    w = A[:, idx, idx].real
    order = np.argsort(w, axis=1, kind="stable")
    w = np.take_along_axis(w, order, axis=1)
    if vectors:
        V = np.take_along_axis(V, order[:, None, :], axis=2)
    return w, V, info


def _hessenberg(H):
    n = H.shape[0]
    for k in range(n - 2):
        x = H[k + 1:, k].copy()
        nrm = np.linalg.norm(x)
        if nrm == 0.0:
            continue
        x0a = abs(x[0])
        alpha = -nrm if x0a == 0.0 else -(x[0] / x0a) * nrm
        v = x
        v[0] -= alpha
        vn = np.linalg.norm(v)
        if vn == 0.0:
            continue
        v /= vn
        H[k + 1:, k:] -= 2.0 * np.outer(v, v.conj() @ H[k + 1:, k:])
        H[:, k + 1:] -= 2.0 * np.outer(H[:, k + 1:] @ v, v.conj())
        H[k + 2:, k] = 0.0
    return H


def _hqr(H, maxit):
    n = H.shape[0]
    ev = np.empty(n, dtype=np.complex128)
    anorm = np.linalg.norm(H)
    hi = n - 1
    its = 0
    cs = np.empty(n, dtype=np.complex128)
    sn = np.empty(n, dtype=np.complex128)
    while hi >= 0:
        if hi == 0:
            ev[0] = H[0, 0]
            break
        l = hi
        while l > 0:
            s = abs(H[l - 1, l - 1]) + abs(H[l, l])
            if s == 0.0:
                s = anorm
            if abs(H[l, l - 1]) <= _EPS * s:
                H[l, l - 1] = 0.0
                break
            l -= 1
        if l == hi:
            ev[hi] = H[hi, hi]
            hi -= 1
            its = 0
            continue
        its += 1
        if its > maxit:
            return ev, False
        if its % 11 == 10:
            mu = H[hi, hi] + 0.75 * abs(H[hi, hi - 1])
        else:
            a, b = H[hi - 1, hi - 1], H[hi - 1, hi]
            c, d = H[hi, hi - 1], H[hi, hi]
            disc = np.sqrt(0.25 * (a - d) ** 2 + b * c + 0j)
            m1, m2 = 0.5 * (a + d) + disc, 0.5 * (a + d) - disc
            mu = m1 if abs(m1 - d) <= abs(m2 - d) else m2
        blk = slice(l, hi + 1)
        H[blk, blk] -= mu * np.eye(hi + 1 - l)
        for k in range(l, hi):
            x, y = H[k, k], H[k + 1, k]
            r = np.hypot(abs(x), abs(y))
            cc, ss = (1.0 + 0j, 0j) if r == 0.0 else (x / r, y / r)
            cs[k], sn[k] = cc, ss
            rx = H[k, k:hi + 1].copy()
            ry = H[k + 1, k:hi + 1]
            H[k, k:hi + 1] = np.conj(cc) * rx + np.conj(ss) * ry
            H[k + 1, k:hi + 1] = -ss * rx + cc * ry
        for k in range(l, hi):
            cc, ss = cs[k], sn[k]
            top = min(k + 2, hi)
            cx = H[l:top + 1, k].copy()
            cy = H[l:top + 1, k + 1]
            H[l:top + 1, k] = cx * cc + cy * ss
            H[l:top + 1, k + 1] = -cx * np.conj(ss) + cy * np.conj(cc)
        H[blk, blk] += mu * np.eye(hi + 1 - l)
    return ev, True


def hqr_eigvals(a, maxit=60):
    a = np.asarray(a, dtype=np.complex128)
    P, n, _ = a.shape
    out = np.empty((P, n), dtype=np.complex128)
    info = np.zeros(P, dtype=np.intp)
    for p in range(P):
        H = _hessenberg(a[p].copy())
        out[p], ok = _hqr(H, maxit)
        info[p] = 0 if ok else 1
    return out, info

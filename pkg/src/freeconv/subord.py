"""Operator-valued free additive convolution by subordination.

For ``x``, ``y`` free with amalgamation over ``M_n`` and ``b`` in the upper
half-plane, ``omega(b)`` is the fixed point of::

    f_b(w) = h_y(h_x(w) + b) + b,      h(w) = inv(G(w)) - w

and ``G_{x+y}(b) = G_x(omega(b))``.  Everything here works on stacks
``(P, n, n)`` of arguments so a whole grid advances in lock step; points that
have converged drop out of the active set.

A pencil ``c0 + sum_j a_j x_j`` is handled by left folding:
``x_1 + (x_2 + (... + x_k))``, each tail being itself a subordination
evaluator.
"""
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import cmat, kernels, laws as _laws
from .errors import FixedPointError, HalfPlaneError, PencilError, SingularMatrixError
from .linpen import LinearPencil, lambda_block, lambda_embed

__all__ = [
    "FixedPointOptions",
    "SummandTransform",
    "LawTerm",
    "FreeSum",
    "SemicircularTerm",
    "SolveResult",
    "solve_semicircular",
    "solve_free_add",
    "free_add",
    "pencil_evaluator",
    "pencil_cauchy",
    "scalar_cauchy",
]

OK, MAX_ITER, LEFT_UHP, BREAKDOWN = 0, 1, 2, 3
STATUS_TEXT = {
    OK: "converged",
    MAX_ITER: "iteration cap reached",
    LEFT_UHP: "iterate left the upper half-plane",
    BREAKDOWN: "singular or non-finite iterate",
}


@dataclass(frozen=True)
class FixedPointOptions:
    """Controls for the subordination iteration.

    Parameters
    ----------
    tol : float
        Stop when the step ``r = ||f_b(w) - w||_F`` and the error estimate
        ``r rho / (1 - rho)`` (``rho`` the observed contraction ratio of
        successive steps) are both below ``tol * max(1, ||w||_F)``.
    max_iter : int
        Iteration cap per point.
    damping : float
        ``w <- (1 - damping) f_b(w) + damping w``.
    inner_tol : float or None
        Tolerance of nested (tail) fixed points; default
        ``max(tol / 100, 1e-14)``.
    warm_start : bool
        Start nested fixed points from their previous solution instead of
        from their argument.  Any start point converges, so this changes
        iteration counts, not the fixed point.
    chunk : int
        Grid points advanced together; results do not depend on it.
    group_semicircles : bool
        Treat the semicircular variables of a pencil (when there are at
        least two) as one operator-valued semicircular summand: one matrix
        Dyson equation instead of nested subordination.
    """

    tol: float = 1e-11
    max_iter: int = 100_000
    damping: float = 0.0
    inner_tol: float = None
    warm_start: bool = True
    chunk: int = 4096
    group_semicircles: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")
        if int(self.chunk) < 1:
            raise ValueError("chunk must be >= 1")

    def nested(self):
        tol = self.inner_tol if self.inner_tol is not None else max(self.tol / 100.0, 1e-14)
        return FixedPointOptions(tol=tol, max_iter=self.max_iter, damping=self.damping,
                                 inner_tol=None, warm_start=self.warm_start, chunk=self.chunk,
                                 group_semicircles=self.group_semicircles)


class SummandTransform:
    """Evaluator ``b -> G(b)`` on stacks in the upper half-plane."""

    n = None

    def __call__(self, b, state=None):
        """Return ``(G, new_state)``; ``state`` is an optional warm start."""
        raise NotImplementedError

    def h(self, b, state=None):
        G, state = self(b, state)
        return cmat.inv(G, check_finite=False) - b, G, state


class LawTerm(SummandTransform):
    """``a (x) t`` with ``t`` distributed by ``law``."""

    def __init__(self, law, a):
        self.law = law
        self.coef = _laws.Coefficient.of(a)
        self.n = self.coef.n

    def __call__(self, b, state=None):
        return _laws.ov_cauchy(self.law, self.coef, b, check=False), None


@dataclass
class SolveResult:
    omega: np.ndarray
    G: np.ndarray
    residual: np.ndarray
    iterations: np.ndarray
    status: np.ndarray
    inner: object = field(default=None, repr=False)

    @property
    def ok(self):
        return self.status == OK


_STALL = 8


class _Stopping:
    """A-posteriori stopping rule shared by the fixed-point loops.

    A point stops when its step ``r`` and the error estimate
    ``r * rho / (1 - rho)`` (``rho`` the ratio of successive steps) are both
    below ``tol * scale``.  Once the step is below that bound, ``_STALL``
    consecutive iterations without a new smallest step mean the steps are
    round-off noise and the point is accepted as well; a contracting
    iteration sets a new minimum at every step.
    """

    def __init__(self, P, tol):
        self.tol = tol
        self.prev = np.full(P, np.inf)
        self.best = np.full(P, np.inf)
        self.stall = np.zeros(P, dtype=np.int64)

    def __call__(self, r, scale):
        lim = self.tol * scale
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = np.where(np.isfinite(self.prev) & (self.prev > 0), r / self.prev, 0.0)
            est = np.where(rho < 1, r * rho / (1 - rho), np.inf)
        small = r <= lim
        self.stall = np.where(small & (r >= self.best), self.stall + 1, 0)
        self.best = np.minimum(self.best, r)
        self.prev = r
        return small & ((est <= lim) | (self.stall >= _STALL))

    def keep(self, mask):
        self.prev, self.best, self.stall = self.prev[mask], self.best[mask], self.stall[mask]


def _fro(a):
    return np.sqrt(np.einsum("pij,pij->p", a, a.conj()).real)


def _in_uhp(w):
    n = w.shape[-1]
    if n == 1:
        return w[:, 0, 0].imag > 0
    if n == 2:
        im = (w - np.conj(np.swapaxes(w, 1, 2))) / 2j
        a, d = im[:, 0, 0].real, im[:, 1, 1].real
        c = np.abs(im[:, 0, 1]) ** 2
        return (a > 0) & (a * d - c > 0)
    return cmat.min_imag_eig(w) > 0


def solve_free_add(Gx, Gy, b, opts=None, w0=None, inner_state=None):
    """Batched fixed point; never raises for per-point failures.

    Returns a :class:`SolveResult` with per-point ``status`` codes.
    ``inner_state`` is the warm start handed to ``Gy`` (a nested sum).
    """
    opts = opts or FixedPointOptions()
    b = np.ascontiguousarray(b, dtype=complex)
    P, n, _ = b.shape
    omega = np.array(b if w0 is None else w0, dtype=complex, copy=True)
    G = np.full_like(b, np.nan)
    res = np.full(P, np.inf)
    iters = np.zeros(P, dtype=np.int64)
    status = np.full(P, MAX_ITER, dtype=np.int8)
    state_out = None if inner_state is None else inner_state.copy()
    act = np.arange(P)
    w = omega.copy()
    bb = b
    st = state_out
    alpha = opts.damping
    stop = _Stopping(P, opts.tol)
    for it in range(1, int(opts.max_iter) + 1):
        if act.size == 0:
            break
        try:
            hx, gx, _ = Gx.h(w)
            arg = hx + bb
            hy, _, st_new = Gy.h(arg, st)
            f = hy + bb
        except (SingularMatrixError, FixedPointError, HalfPlaneError):
            hx, gx, f, st_new = _pointwise_step(Gx, Gy, w, bb, st)
        finite = np.all(np.isfinite(f), axis=(1, 2)) & np.all(np.isfinite(gx), axis=(1, 2))
        r = _fro(f - w)
        conv = finite & stop(r, np.maximum(1.0, _fro(w)))
        done = conv | ~finite
        iters[act] = it
        res[act] = np.where(finite, r, np.inf)
        if done.any():
            idx = act[done]
            omega[idx] = w[done]
            G[idx] = gx[done]
            status[idx] = np.where(conv[done], OK, BREAKDOWN)
            if st_new is not None and state_out is not None:
                state_out[idx] = st_new[done]
        keep = ~done
        if not keep.any():
            act = act[:0]
            break
        w_next = f[keep] if alpha == 0.0 else (1 - alpha) * f[keep] + alpha * w[keep]
        inside = _in_uhp(w_next)
        if not inside.all():
            lost = act[keep][~inside]
            omega[lost] = w[keep][~inside]
            status[lost] = LEFT_UHP
            keep_idx = np.flatnonzero(keep)[inside]
            keep = np.zeros_like(keep)
            keep[keep_idx] = True
            w_next = w_next[inside]
        stop.keep(keep)
        act = act[keep]
        w = w_next
        bb = bb[keep]
        st = None if st_new is None else st_new[keep]
    if act.size:
        omega[act] = w
        if state_out is not None and st is not None:
            state_out[act] = st
    return SolveResult(omega, G, res, iters, status, state_out)


def _pointwise_step(Gx, Gy, w, bb, st):
    """Fallback when some matrix in the batch is singular: mark it as breakdown."""
    P = w.shape[0]
    hx = np.full_like(w, np.nan)
    gx = np.full_like(w, np.nan)
    f = np.full_like(w, np.nan)
    st_new = None if st is None else st.copy()
    for p in range(P):
        try:
            h1, g1, _ = Gx.h(w[p : p + 1])
            h2, _, s2 = Gy.h(h1 + bb[p : p + 1], None if st is None else st[p : p + 1])
        except (SingularMatrixError, FixedPointError, HalfPlaneError):
            continue
        hx[p], gx[p], f[p] = h1[0], g1[0], h2[0] + bb[p]
        if s2 is not None and st_new is not None:
            st_new[p] = s2[0]
    return hx, gx, f, st_new


class FreeSum(SummandTransform):
    """``G_{x+y}`` of two free summands, evaluated by subordination.

    The evaluator state is the subordination function at the last query,
    used as the warm start of the next (when ``opts.warm_start``).
    """

    def __init__(self, Gx, Gy, opts=None):
        if Gx.n != Gy.n:
            raise ValueError("summands act on different matrix sizes")
        self.Gx, self.Gy = Gx, Gy
        self.n = Gx.n
        self.opts = opts or FixedPointOptions()

    def __call__(self, b, state=None):
        w0 = state if (self.opts.warm_start and state is not None) else None
        res = solve_free_add(self.Gx, self.Gy, b, self.opts, w0=w0)
        bad = res.status != OK
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise FixedPointError(
                f"nested fixed point failed ({STATUS_TEXT[int(res.status[i])]}, "
                f"residual {res.residual[i]:.3e})",
                residual=float(res.residual[i]),
            )
        return res.G, res.omega


class SemicircularTerm(SummandTransform):
    """``sum_j a_j (x) s_j`` for free semicircular ``s_j``.

    Its transform solves the matrix Dyson equation
    ``G = inv(b - m - eta(G))`` with ``m = sum_j mean_j a_j`` and
    ``eta(B) = sum_j var_j a_j B a_j``.  The state is the last solution.
    """

    def __init__(self, coeffs, laws_, opts=None):
        coeffs = [np.asarray(a, dtype=complex) for a in coeffs]
        if not coeffs:
            raise ValueError("SemicircularTerm needs at least one coefficient")
        self.n = coeffs[0].shape[0]
        self.coeffs = coeffs
        self.var = np.array([law.variance for law in laws_], float)
        self.shift = sum(law.mean * a for law, a in zip(laws_, coeffs))
        self.opts = opts or FixedPointOptions()

    def eta(self, B):
        out = np.zeros_like(B)
        for v, a in zip(self.var, self.coeffs):
            out += v * (a @ B @ a)
        return out

    def __call__(self, b, state=None):
        g0 = state if (self.opts.warm_start and state is not None) else None
        res = solve_semicircular(self, b, self.opts, g0=g0)
        bad = res.status != OK
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise FixedPointError(
                f"matrix Dyson equation failed ({STATUS_TEXT[int(res.status[i])]}, "
                f"residual {res.residual[i]:.3e})",
                residual=float(res.residual[i]),
            )
        return res.G, res.G


def solve_semicircular(term, b, opts=None, g0=None):
    """Batched iteration ``G <- inv(b - m - eta(G))``; never raises per point.

    The map sends the lower half-plane into itself whenever ``b`` is in the
    upper one, so every iterate is checked (as ``-G`` in the upper
    half-plane) and the loop stops with status codes as in
    :func:`solve_free_add`.  ``omega`` of the result is ``b``.
    """
    opts = opts or FixedPointOptions()
    b = np.ascontiguousarray(b, dtype=complex)
    P, n, _ = b.shape
    shifted = b - term.shift
    G = np.full_like(b, np.nan)
    res = np.full(P, np.inf)
    iters = np.zeros(P, dtype=np.int64)
    status = np.full(P, MAX_ITER, dtype=np.int8)
    act = np.arange(P)
    bb = shifted
    try:
        g = cmat.inv(bb, check_finite=False) if g0 is None else np.array(g0, dtype=complex)
    except SingularMatrixError:
        g = -1j * np.tile(np.eye(n), (P, 1, 1))
    alpha = opts.damping
    stop = _Stopping(P, opts.tol)
    for it in range(1, int(opts.max_iter) + 1):
        if act.size == 0:
            break
        arg = bb - term.eta(g)
        flat, info = kernels.lu_inv(np.ascontiguousarray(arg))
        finite = (info == 0) & np.all(np.isfinite(flat), axis=(1, 2))
        f = flat if alpha == 0.0 else (1 - alpha) * flat + alpha * g
        r = _fro(f - g)
        conv = finite & stop(r, np.maximum(1.0, _fro(g)))
        inside = np.ones(act.size, bool)
        inside[finite] = _in_uhp(-f[finite])
        done = conv | ~finite | ~inside
        iters[act] = it
        res[act] = np.where(finite, r, np.inf)
        if done.any():
            idx = act[done]
            G[idx] = np.where(finite[done, None, None], f[done], np.nan)
            status[idx] = np.where(~finite[done], BREAKDOWN, np.where(inside[done], OK, LEFT_UHP))
        keep = ~done
        stop.keep(keep)
        act = act[keep]
        g = f[keep]
        bb = bb[keep]
    if act.size:
        G[act] = g
    return SolveResult(b, G, res, iters, status)


def free_add(Gx, Gy, b, opts=None):
    """``(omega, G)`` with ``G = Gx(omega) = G_{x+y}(b)``.

    Raises :class:`FixedPointError` at the iteration cap and
    :class:`HalfPlaneError` if an iterate leaves the upper half-plane.
    """
    b = np.asarray(b, dtype=complex)
    single = b.ndim == 2
    stack = b[None] if single else b
    if np.any(cmat.min_imag_eig(stack) <= 0):
        raise HalfPlaneError("free_add needs b in the upper half-plane")
    res = solve_free_add(Gx, Gy, stack, opts)
    _raise_on_failure(res)
    return (res.omega[0], res.G[0]) if single else (res.omega, res.G)


def _raise_on_failure(res, where=None):
    bad = np.flatnonzero(res.status != OK)
    if bad.size == 0:
        return
    i = int(bad[0])
    code = int(res.status[i])
    loc = f" at point {i if where is None else where[i]}"
    msg = f"{STATUS_TEXT[code]}{loc} after {int(res.iterations[i])} iterations, residual {res.residual[i]:.3e}"
    if code == LEFT_UHP:
        raise HalfPlaneError(msg)
    raise FixedPointError(msg, residual=float(res.residual[i]))


# ------------------------------------------------------------------ pencils

class _ZeroTerm(SummandTransform):
    def __init__(self, n):
        self.n = n

    def __call__(self, b, state=None):
        return cmat.inv(b, check_finite=False), None


def pencil_evaluator(pencil, law_map, opts=None, order=None):
    """Summand evaluator for ``sum_j a_j x_j`` (constant part excluded)."""
    opts = opts or FixedPointOptions()
    names = list(order) if order is not None else list(pencil.variables)
    if sorted(names) != sorted(pencil.variables):
        raise PencilError(f"fold order {names} does not match pencil variables {list(pencil.variables)}")
    missing = [v for v in names if v not in law_map]
    if missing:
        raise KeyError(f"no law given for variable(s) {', '.join(missing)}")
    semi = []
    if opts.group_semicircles:
        semi = [v for v in names if isinstance(law_map[v], _laws.Semicircle)
                and np.any(pencil.coeffs[v])]
        if len(semi) < 2:
            # a lone semicircle has a closed-form transform; nothing to merge
            semi = []
    terms = [LawTerm(law_map[v], pencil.coeffs[v]) for v in names if v not in semi]
    terms = [t for t in terms if t.coef.rank > 0]
    if semi:
        # innermost, so it receives the tightest tolerance
        terms.append(SemicircularTerm([pencil.coeffs[v] for v in semi], [law_map[v] for v in semi]))
    if not terms:
        return _ZeroTerm(pencil.dim)
    ev = terms[-1]
    nested = opts
    chain = [nested]
    for _ in range(len(terms) - 2):
        nested = nested.nested()
        chain.append(nested)
    # innermost sums get the tightest tolerance
    if isinstance(ev, SemicircularTerm):
        ev.opts = chain[-1].nested() if len(terms) > 1 else opts
    for t, o in zip(reversed(terms[:-1]), reversed(chain)):
        ev = FreeSum(t, ev, o)
    return ev


def _chunks(P, size):
    for s in range(0, P, size):
        yield slice(s, min(P, s + size))


def pencil_solve(pencil, law_map, b, opts=None, order=None):
    """Evaluate ``G_{p_hat}(b)`` on a stack without raising per point.

    Returns ``(G, status, residual, iterations)``.
    """
    opts = opts or FixedPointOptions()
    b = np.asarray(b, dtype=complex)
    shifted = np.ascontiguousarray(b - pencil.constant)
    P = shifted.shape[0]
    ev = pencil_evaluator(pencil, law_map, opts, order)
    G = np.empty_like(shifted)
    status = np.zeros(P, dtype=np.int8)
    resid = np.zeros(P)
    iters = np.zeros(P, dtype=np.int64)

    def run(sl):
        part = shifted[sl]
        if isinstance(ev, FreeSum):
            inner = part.copy() if isinstance(ev.Gy, FreeSum) and opts.warm_start else None
            res = solve_free_add(ev.Gx, ev.Gy, part, ev.opts, inner_state=inner)
            G[sl], status[sl], resid[sl], iters[sl] = res.G, res.status, res.residual, res.iterations
            return
        if isinstance(ev, SemicircularTerm):
            res = solve_semicircular(ev, part, ev.opts)
            G[sl], status[sl], resid[sl], iters[sl] = res.G, res.status, res.residual, res.iterations
            return
        try:
            G[sl] = ev(part)[0]
        except SingularMatrixError:
            for p in range(sl.start, sl.stop):
                try:
                    G[p] = ev(shifted[p : p + 1])[0][0]
                except SingularMatrixError:
                    G[p] = np.nan
                    status[p] = BREAKDOWN

    # chunk boundaries are fixed, so the result does not depend on the thread count
    slices = list(_chunks(P, int(opts.chunk)))
    workers = min(thread_cap(), len(slices))
    if workers <= 1:
        for sl in slices:
            run(sl)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, slices))
    return G, status, resid, iters


def pencil_cauchy(pencil, law_map, b, opts=None, order=None):
    """``G_{p_hat}(b) = E[inv(b - p_hat)]`` for one matrix or a stack."""
    b = np.asarray(b, dtype=complex)
    single = b.ndim == 2
    stack = b[None] if single else b
    if stack.shape[-1] != pencil.dim:
        raise ValueError(f"argument is {stack.shape[-1]}x{stack.shape[-1]}, pencil is {pencil.dim}x{pencil.dim}")
    if np.any(cmat.min_imag_eig(stack) <= 0):
        raise HalfPlaneError("pencil_cauchy needs b in the upper half-plane")
    G, status, resid, iters = pencil_solve(pencil, law_map, stack, opts, order)
    _raise_on_failure(SolveResult(None, G, resid, iters, status))
    return G[0] if single else G


def scalar_cauchy(target, law_map, z, opts=None, eps=None, order=None, delta=None):
    """Scalar transform read off the pencil corner.

    ``target`` is a :class:`LinearPencil` or a selfadjoint
    :class:`~freeconv.ncexpr.NcPolynomial` (linearized on the fly).  Corner 1:
    ``G_p(z)``, entry ``(0, 0)``.  Corner 2: ``z`` plays the role of
    ``lambda`` and ``eps`` is required; returns entry ``(1, 0)``, the
    regularized transform ``G_{eps,p}(lambda)``.
    """
    from .linpen import linearize_sa

    pencil = target if isinstance(target, LinearPencil) else linearize_sa(target)
    z_arr = np.asarray(z, dtype=complex)
    flat = z_arr.reshape(-1)
    if pencil.corner == 1:
        if np.any(flat.imag <= 0):
            raise HalfPlaneError("scalar_cauchy needs Im z > 0")
        b = lambda_embed(pencil, flat, delta=delta)
        G = pencil_cauchy(pencil, law_map, b, opts, order)
        out = G[:, 0, 0]
    else:
        if eps is None or not eps > 0:
            raise ValueError("corner-2 pencils need eps > 0")
        b = lambda_embed(pencil, lambda_block(flat, eps), delta=delta)
        G = pencil_cauchy(pencil, law_map, b, opts, order)
        out = G[:, 1, 0]
    out = out.reshape(z_arr.shape)
    return complex(out) if out.ndim == 0 else out


def thread_cap():
    """Parallelism cap from ``FREECONV_THREADS`` (default: all CPUs)."""
    raw = os.environ.get("FREECONV_THREADS", "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        val = int(raw)
    except ValueError:
        return 1
    return max(1, val)

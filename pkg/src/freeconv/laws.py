"""Scalar spectral laws and their scalar and operator-valued Cauchy transforms.

A law ``mu`` on the real line enters a linear pencil through a term
``a (x) t`` with a Hermitian coefficient ``a``.  The operator-valued
transform of such a term is::

    G(b) = integral of inv(b - a t) dmu(t)        for b in H+(M_n)

Two routes are implemented:

* ``"exact"``: with ``a = U D U*`` of rank ``r`` the Woodbury identity gives
  ``inv(b - t a) = inv(b) + inv(b) U t (I - t K)^{-1} D U* inv(b)`` with
  ``K = D U* inv(b) U``, so the integral reduces to the matrix function
  ``phi(K)``, ``phi(theta) = integral of t / (1 - t theta) dmu(t)``,
  evaluated from the closed-form scalar transform.
* ``"quadrature"``: adaptive Gauss-Legendre on the absolutely continuous
  part (after ``t = c + r cos(theta)``, which removes the square-root edges)
  plus exact atom sums.

Discrete laws (``Atomic``, ``Quadrature``) use the exact finite sum.
"""
from dataclasses import dataclass, field

import numpy as np

from . import cmat
from .errors import ConfigError, HalfPlaneError, NotHermitianError, QuadratureError

__all__ = [
    "ScalarLaw",
    "Semicircle",
    "MarchenkoPastur",
    "Atomic",
    "Quadrature",
    "Coefficient",
    "cauchy_scalar",
    "ov_cauchy",
    "h_transform",
    "sample",
    "law_from_config",
    "adaptive_gauss_legendre",
]

_GL_ORDER = 16


def _sqrt_branch(z, lo, hi):
    """``sqrt((z - lo)(z - hi))`` with its cut on ``[lo, hi]``, ~ ``z`` at infinity."""
    return np.sqrt(z - lo + 0j) * np.sqrt(z - hi + 0j)


def adaptive_gauss_legendre(f, a, b, rtol=1e-10, atol=0.0, max_panels=20000, order=_GL_ORDER):
    """Integrate an array-valued ``f`` over ``[a, b]`` by panel bisection.

    ``f`` maps a 1-D array of nodes to an array whose first axis runs over the
    nodes.  Each panel is compared against the sum of its two halves; panels
    whose discrepancy exceeds their length-weighted share of
    ``tol = max(atol, rtol * |I|)`` are bisected.  Refinement stops once every
    panel passes or the summed discrepancy is below ``tol``.
    """
    x, w = np.polynomial.legendre.leggauss(order)

    def rule(lo, hi):
        # panels (k,) -> estimates (k, ...) and the panel integral of |f| (k,)
        lo = np.asarray(lo, float)
        hi = np.asarray(hi, float)
        half = 0.5 * (hi - lo)
        nodes = (0.5 * (hi + lo))[:, None] + half[:, None] * x[None, :]
        vals = f(nodes.ravel())
        vals = vals.reshape((len(lo), order) + vals.shape[1:])
        est = np.tensordot(w, np.moveaxis(vals, 1, 0), axes=(0, 0))
        est = est * half.reshape((-1,) + (1,) * (est.ndim - 1))
        mag = np.abs(vals).reshape(len(lo), order, -1).max(axis=2) @ w * half
        return est, mag

    edges = np.linspace(a, b, 9)
    lo, hi = edges[:-1], edges[1:]
    whole, _ = rule(lo, hi)
    done = []
    done_err = 0.0
    total_panels = len(lo)
    while True:
        mid = 0.5 * (lo + hi)
        left, lmag = rule(lo, mid)
        right, rmag = rule(mid, hi)
        halves = left + right
        err = np.abs(halves - whole).reshape(len(lo), -1).max(axis=1)
        estimate = sum(done) + halves.sum(axis=0) if done else halves.sum(axis=0)
        scale = max(atol, rtol * float(np.abs(estimate).max()))
        share = scale * (hi - lo) / (b - a)
        # round-off floor: a panel cannot be resolved beyond a few ulps of its |f| integral
        floor = 64 * np.finfo(float).eps * (lmag + rmag)
        ok = err <= np.maximum(share, floor)
        if done_err + err.sum() <= scale:
            ok[:] = True
        if ok.any():
            done.append(halves[ok].sum(axis=0))
            done_err += float(err[ok].sum())
        if ok.all():
            return sum(done)
        bad = ~ok
        total_panels += int(bad.sum())
        if total_panels > max_panels:
            raise QuadratureError(
                f"adaptive quadrature exceeded {max_panels} panels "
                f"(worst panel error {err[bad].max():.3e})"
            )
        lo = np.concatenate([lo[bad], mid[bad]])
        hi = np.concatenate([mid[bad], hi[bad]])
        whole = np.concatenate([left[bad], right[bad]])


class ScalarLaw:
    """Common interface; concrete laws are frozen dataclasses below."""

    kind = "abstract"

    # --- to be provided by subclasses
    def cauchy_any(self, z):
        """Cauchy transform at any ``z`` off the support (array-valued)."""
        raise NotImplementedError

    def e_transform(self, z):
        """``z G(z) - 1``, computed without cancellation at large ``|z|``."""
        raise NotImplementedError

    def cauchy_derivative(self, z):
        raise NotImplementedError

    @property
    def atoms(self):
        """Tuple of ``(point, mass)``."""
        return ()

    def continuous_part(self):
        """``(t_of_theta, weight_of_theta)`` on ``[0, pi]`` or ``None``."""
        return None

    @property
    def radius(self):
        lo, hi = self.support
        return max(abs(lo), abs(hi), 1e-300)

    # --- shared
    def cauchy(self, z):
        return self.cauchy_any(np.asarray(z, dtype=complex))

    def phi(self, theta):
        """``integral of t / (1 - t theta) dmu(t)``."""
        theta = np.asarray(theta, dtype=complex)
        zeta = 1.0 / theta
        return zeta * self.e_transform(zeta)

    def phi_derivative(self, theta):
        """``integral of t^2 / (1 - t theta)^2 dmu(t)``."""
        theta = np.asarray(theta, dtype=complex)
        small = np.abs(theta) * self.radius < 0.1
        out = np.empty(theta.shape, dtype=complex)
        if small.any():
            th = theta[small]
            m = self.moments(42)
            acc = np.zeros(th.shape, dtype=complex)
            for k in range(40, 0, -1):
                acc = acc * th + k * m[k + 1]
            out[small] = acc
        big = ~small
        if big.any():
            zeta = 1.0 / theta[big]
            g = self.cauchy_any(zeta)
            dg = self.cauchy_derivative(zeta)
            out[big] = -zeta**2 * (2 * zeta * g - 1 + zeta**2 * dg)
        return out

    def moments(self, kmax):
        """Moments ``m_0 .. m_kmax`` (exact Gauss rule on the smooth parametrisation)."""
        cache = self.__dict__.get("_moment_cache")
        if cache is not None and len(cache) > kmax:
            return cache[: kmax + 1]
        m = np.zeros(kmax + 1)
        for point, mass in self.atoms:
            m += mass * point ** np.arange(kmax + 1)
        part = self.continuous_part()
        if part is not None:
            t_of, w_of = part
            x, w = np.polynomial.legendre.leggauss(kmax + 40)
            th = 0.5 * np.pi * (x + 1)
            t = t_of(th)
            wt = w_of(th) * w * 0.5 * np.pi
            m += (wt[None, :] * t[None, :] ** np.arange(kmax + 1)[:, None]).sum(axis=1)
        object.__setattr__(self, "_moment_cache", m)
        return m

    def cauchy_quadrature(self, z, rtol=1e-12):
        """Cauchy transform by adaptive quadrature of the density (oracle)."""
        z = complex(z)
        total = sum(mass / (z - p) for p, mass in self.atoms)
        part = self.continuous_part()
        if part is not None:
            t_of, w_of = part
            total += complex(
                adaptive_gauss_legendre(
                    lambda th: w_of(th) / (z - t_of(th)), 0.0, np.pi, rtol=rtol
                )
            )
        return total

    def sample(self, count, seed):
        raise NotImplementedError


@dataclass(frozen=True)
class Semicircle(ScalarLaw):
    mean: float = 0.0
    variance: float = 1.0
    kind = "semicircle"

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("semicircle variance must be positive")

    @property
    def support(self):
        r = 2.0 * np.sqrt(self.variance)
        return (self.mean - r, self.mean + r)

    def _parts(self, z):
        u = z - self.mean
        r = 2.0 * np.sqrt(self.variance)
        return u, _sqrt_branch(u, -r, r)

    def cauchy_any(self, z):
        u, R = self._parts(z)
        return 2.0 / (u + R)

    def e_transform(self, z):
        u, R = self._parts(z)
        s = u + R
        return (2.0 * self.mean + 4.0 * self.variance / s) / s

    def cauchy_derivative(self, z):
        u, R = self._parts(z)
        return -(2.0 / (u + R)) / R

    def density(self, t):
        t = np.asarray(t, float)
        d = 4.0 * self.variance - (t - self.mean) ** 2
        return np.sqrt(np.clip(d, 0.0, None)) / (2.0 * np.pi * self.variance)

    def continuous_part(self):
        r = 2.0 * np.sqrt(self.variance)
        return (lambda th: self.mean + r * np.cos(th),
                lambda th: (2.0 / np.pi) * np.sin(th) ** 2)

    def sample(self, count, seed):
        rng = np.random.default_rng(seed)
        b = rng.beta(1.5, 1.5, size=count)
        return self.mean + 2.0 * np.sqrt(self.variance) * (2.0 * b - 1.0)


@dataclass(frozen=True)
class MarchenkoPastur(ScalarLaw):
    """Free Poisson law with rate ``ratio`` and jump size ``scale``.

    Cauchy transform (scale 1)::

        G(z) = (z + 1 - l - sqrt((z - (1 + l))^2 - 4 l)) / (2 z)

    Absolutely continuous part on ``scale * [(1 - sqrt l)^2, (1 + sqrt l)^2]``
    with mass ``min(1, l)``, plus an atom of mass ``max(0, 1 - l)`` at 0.
    Mean ``scale * l``, variance ``scale^2 * l``.
    """

    ratio: float = 0.25
    scale: float = 1.0
    kind = "marchenko_pastur"

    def __post_init__(self):
        if not (self.ratio > 0 and self.scale > 0):
            raise ValueError("marchenko_pastur needs ratio > 0 and scale > 0")

    @property
    def edges(self):
        s = np.sqrt(self.ratio)
        return ((1 - s) ** 2, (1 + s) ** 2)

    @property
    def mean(self):
        return self.scale * self.ratio

    @property
    def variance(self):
        return self.scale**2 * self.ratio

    @property
    def support(self):
        lo, hi = self.edges
        lo = 0.0 if self.ratio < 1 else lo
        return (self.scale * lo, self.scale * hi)

    @property
    def atoms(self):
        return ((0.0, 1.0 - self.ratio),) if self.ratio < 1 else ()

    def _parts(self, z):
        x = z / self.scale
        lo, hi = self.edges
        R = _sqrt_branch(x, lo, hi)
        return x, x - 1.0 - self.ratio + R, R

    def e_transform(self, z):
        _, dn, _ = self._parts(z)
        return 2.0 * self.ratio / dn

    def cauchy_any(self, z):
        x, dn, _ = self._parts(z)
        return (1.0 + 2.0 * self.ratio / dn) / x / self.scale

    def cauchy_derivative(self, z):
        x, dn, R = self._parts(z)
        g = (1.0 + 2.0 * self.ratio / dn) / x
        return (g * g - g) / R / self.scale**2

    def density(self, t):
        x = np.asarray(t, float) / self.scale
        lo, hi = self.edges
        d = (hi - x) * (x - lo)
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = np.where(d > 0, np.sqrt(np.clip(d, 0, None)) / (2 * np.pi * x), 0.0)
        return rho / self.scale

    def continuous_part(self):
        c = 1.0 + self.ratio
        r = 2.0 * np.sqrt(self.ratio)
        a = self.scale

        def t_of(th):
            return a * (c + r * np.cos(th))

        def w_of(th):
            # r^2 sin^2 / (2 pi t); at ratio 1 the 1 - cos form avoids 0/0 at the edge
            t1 = c + r * np.cos(th)
            if self.ratio == 1.0:
                return (1.0 - np.cos(th)) / np.pi
            return r * r * np.sin(th) ** 2 / (2 * np.pi * t1)

        return t_of, w_of

    def sample(self, count, seed):
        # rejection in theta: the weight is bounded even where the density in t is not
        rng = np.random.default_rng(seed)
        atom = max(0.0, 1.0 - self.ratio)
        out = np.zeros(count)
        cont = rng.random(count) >= atom
        k = int(cont.sum())
        t_of, w_of = self.continuous_part()
        peak = w_of(np.linspace(0.0, np.pi, 2001)).max() * 1.05
        got, have = [], 0
        while have < k:
            th = rng.uniform(0.0, np.pi, size=2 * k + 16)
            keep = th[rng.uniform(0.0, peak, size=th.shape) < w_of(th)]
            got.append(keep)
            have += keep.size
        out[cont] = t_of(np.concatenate(got)[:k])
        return out


@dataclass(frozen=True)
class Atomic(ScalarLaw):
    points: tuple = (0.0,)
    weights: tuple = (1.0,)
    kind = "atomic"

    def __post_init__(self):
        p = tuple(float(v) for v in np.atleast_1d(self.points))
        w = tuple(float(v) for v in np.atleast_1d(self.weights))
        if len(p) != len(w) or not p:
            raise ValueError(f"{self.kind}: points and weights must be non-empty and of equal length")
        if not all(np.isfinite(p)) or min(w) < 0 or abs(sum(w) - 1.0) > 1e-12:
            raise ValueError(f"{self.kind}: finite nodes and weights on the simplex required")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "weights", w)

    @property
    def nodes(self):
        return np.array(self.points)

    @property
    def masses(self):
        return np.array(self.weights)

    @property
    def atoms(self):
        return tuple(zip(self.points, self.weights))

    @property
    def support(self):
        return (min(self.points), max(self.points))

    @property
    def mean(self):
        return float(self.masses @ self.nodes)

    @property
    def variance(self):
        return float(self.masses @ (self.nodes - self.mean) ** 2)

    def cauchy_any(self, z):
        z = np.asarray(z, dtype=complex)
        return np.tensordot(1.0 / (z[..., None] - self.nodes), self.masses, axes=(-1, 0))

    def e_transform(self, z):
        z = np.asarray(z, dtype=complex)
        return np.tensordot(self.nodes / (z[..., None] - self.nodes), self.masses, axes=(-1, 0))

    def phi(self, theta):
        theta = np.asarray(theta, dtype=complex)
        t = self.nodes
        return np.tensordot(t / (1.0 - theta[..., None] * t), self.masses, axes=(-1, 0))

    def phi_derivative(self, theta):
        theta = np.asarray(theta, dtype=complex)
        t = self.nodes
        return np.tensordot((t / (1.0 - theta[..., None] * t)) ** 2, self.masses, axes=(-1, 0))

    def cauchy_derivative(self, z):
        z = np.asarray(z, dtype=complex)
        return -np.tensordot(1.0 / (z[..., None] - self.nodes) ** 2, self.masses, axes=(-1, 0))

    def sample(self, count, seed):
        rng = np.random.default_rng(seed)
        return rng.choice(self.nodes, size=count, p=self.masses)


@dataclass(frozen=True)
class Quadrature(Atomic):
    """User-supplied discretisation of a law (nodes and simplex weights)."""

    kind = "quadrature"

    def __init__(self, nodes=(0.0,), weights=(1.0,)):
        super().__init__(points=nodes, weights=weights)


# ------------------------------------------------------------- scalar API

def cauchy_scalar(law, z):
    """Cauchy transform of ``law`` at ``z`` with ``Im z > 0``."""
    z_arr = np.asarray(z, dtype=complex)
    if np.any(z_arr.imag <= 0):
        raise HalfPlaneError("cauchy_scalar needs Im z > 0")
    out = law.cauchy(z_arr)
    return complex(out) if np.ndim(out) == 0 else out


# ----------------------------------------------------- operator-valued API

@dataclass(frozen=True)
class Coefficient:
    """Hermitian coefficient ``a = U diag(d) U*`` restricted to its range."""

    a: np.ndarray
    u: np.ndarray = field(repr=False)
    d: np.ndarray = field(repr=False)

    @classmethod
    def of(cls, a, rtol=1e-13):
        if isinstance(a, Coefficient):
            return a
        a = cmat.as_cmatrix(a)
        if np.linalg.norm(a - a.conj().T) > 1e-12 * max(np.linalg.norm(a), 1e-300):
            raise NotHermitianError("coefficient matrix must be Hermitian")
        w, v = cmat.eig_herm(a)
        keep = np.abs(w) > rtol * max(np.abs(w).max(initial=0.0), 1e-300)
        return cls(a=a, u=np.ascontiguousarray(v[:, keep]), d=w[keep].astype(float))

    @property
    def n(self):
        return self.a.shape[0]

    @property
    def rank(self):
        return len(self.d)


def _check_uhp(b):
    m = cmat.min_imag_eig(b)
    if np.any(m <= 0):
        raise HalfPlaneError(
            f"argument not in the upper half-plane (min eigenvalue of Im b = {float(np.min(m)):.3e})"
        )


def _matfun_2x2(law, K):
    """``phi(K)`` for a stack of 2x2 matrices via divided differences."""
    tr = K[:, 0, 0] + K[:, 1, 1]
    det = K[:, 0, 0] * K[:, 1, 1] - K[:, 0, 1] * K[:, 1, 0]
    mid = 0.5 * tr
    half = np.sqrt(mid * mid - det + 0j)
    t1, t2 = mid + half, mid - half
    f1, f2 = law.phi(t1), law.phi(t2)
    close = np.abs(half) <= 5e-6 * np.maximum(np.abs(t1), np.abs(t2))
    dd = np.empty_like(f1)
    far = ~close
    dd[far] = (f1[far] - f2[far]) / (2.0 * half[far])
    if close.any():
        dd[close] = law.phi_derivative(mid[close])
    eye = np.eye(2)
    return 0.5 * (f1 + f2)[:, None, None] * eye + dd[:, None, None] * (K - mid[:, None, None] * eye)


def _exact(law, coef, b):
    """Woodbury route; returns ``(G, bad)`` where ``bad`` flags ill-conditioning."""
    P = b.shape[0]
    winv = cmat.inv(b, check_finite=False)
    bad = np.zeros(P, dtype=bool)
    r = coef.rank
    if r == 0:
        return winv, bad
    U, d = coef.u, coef.d
    Uh = U.conj().T
    left = winv @ U  # (P, n, r)
    right = Uh @ winv  # (P, r, n)
    M = Uh @ left  # (P, r, r)
    K = d[None, :, None] * M
    if r == 1:
        F = law.phi(K[:, 0, 0])[:, None, None]
    elif r == 2:
        F = _matfun_2x2(law, K)
    else:
        theta, S = np.linalg.eig(K)
        Sinv = np.linalg.inv(S)
        cond = np.linalg.norm(S, axis=(1, 2)) * np.linalg.norm(Sinv, axis=(1, 2))
        bad = ~(cond < 1e6)
        F = (S * law.phi(theta)[:, None, :]) @ Sinv
    G = winv + left @ (F * d[None, None, :]) @ right
    return G, bad


def _finite_sum(law, coef, b):
    P, n, _ = b.shape
    G = np.zeros_like(b)
    for t, w in zip(law.points, law.weights):
        G += w * cmat.inv(b - t * coef.a, check_finite=False)
    return G


def _quadrature(law, coef, b, rtol=1e-10):
    out = np.empty_like(b)
    a = coef.a
    part = law.continuous_part()
    for p in range(b.shape[0]):
        bp = b[p]
        acc = np.zeros_like(bp)
        for t, mass in law.atoms:
            if mass > 0:
                acc += mass * cmat.inv(bp - t * a, check_finite=False)
        if part is not None:
            t_of, w_of = part

            def integrand(th, bp=bp):
                t = t_of(th)
                return w_of(th)[:, None, None] * cmat.inv(
                    bp[None] - t[:, None, None] * a[None], check_finite=False
                )

            acc += adaptive_gauss_legendre(integrand, 0.0, np.pi, rtol=rtol)
        out[p] = acc
    return out


def ov_cauchy(law, a, b, method="auto", check=True):
    """Operator-valued Cauchy transform of ``a (x) t`` with ``t ~ law``.

    ``b`` is one matrix or a stack ``(P, n, n)`` in the upper half-plane.
    ``method`` is ``"auto"``, ``"exact"``, ``"sum"`` (discrete laws only) or
    ``"quadrature"``.
    """
    coef = Coefficient.of(a)
    b = np.asarray(b, dtype=complex)
    single = b.ndim == 2
    stack = b[None] if single else b
    if stack.shape[1:] != (coef.n, coef.n):
        raise ValueError(f"argument shape {stack.shape[1:]} does not match coefficient {coef.n}x{coef.n}")
    if check:
        _check_uhp(stack)
    discrete = isinstance(law, Atomic)
    if method == "auto":
        method = "sum" if discrete and len(law.points) <= 8 else "exact"
    if method == "sum":
        if not discrete:
            raise ValueError("method 'sum' needs an atomic or quadrature law")
        G = _finite_sum(law, coef, stack)
    elif method == "exact":
        G, bad = _exact(law, coef, stack)
        if bad.any():
            fallback = _finite_sum if discrete else _quadrature
            G[bad] = fallback(law, coef, stack[bad])
    elif method == "quadrature":
        G = _finite_sum(law, coef, stack) if discrete else _quadrature(law, coef, stack)
    else:
        raise ValueError(f"unknown method {method!r}")
    return G[0] if single else G


def h_transform(law, a, b, method="auto", check=True):
    """``h(b) = inv(G(b)) - b``."""
    G = ov_cauchy(law, a, b, method=method, check=check)
    return cmat.inv(G, check_finite=False) - np.asarray(b, dtype=complex)


def sample(law, count, seed):
    if count < 1:
        raise ValueError("count must be >= 1")
    return law.sample(int(count), seed)


# ------------------------------------------------------------------ config

_LAW_KEYS = {
    "semicircle": (Semicircle, {"mean", "variance"}),
    "marchenko_pastur": (MarchenkoPastur, {"ratio", "scale"}),
    "atomic": (Atomic, {"points", "weights"}),
    "quadrature": (Quadrature, {"nodes", "weights"}),
}


def law_from_config(spec, where="law"):
    """Build a law from ``{"law": name, **params}``; unknown keys are errors."""
    if not isinstance(spec, dict) or "law" not in spec:
        raise ConfigError(f"{where}: expected an object with a 'law' key")
    name = spec["law"]
    if name not in _LAW_KEYS:
        raise ConfigError(f"{where}.law: unknown law {name!r} (expected one of {sorted(_LAW_KEYS)})")
    cls, allowed = _LAW_KEYS[name]
    extra = set(spec) - allowed - {"law"}
    if extra:
        raise ConfigError(f"{where}: unknown key {sorted(extra)[0]!r} for law {name!r}")
    params = {k: spec[k] for k in allowed if k in spec}
    try:
        return cls(**params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None

"""Monte Carlo oracle: Wigner/Wishart ensembles, polynomial spectra, distances.

Gaussian entries come from a counter-based generator (Philox keyed by
``(seed, matrix index)``) through the Box-Muller transform, so a matrix
depends only on its key and never on the order in which matrices are drawn.

Normalizations match :mod:`freeconv.laws`:

* ``wigner(N)``: ``(A + A^T) / sqrt(2 N)``, off-diagonal variance ``1/N``;
  the spectrum tends to ``Semicircle(0, 1)``.
* ``wishart(N, M)``: ``X X^T`` with ``X`` of shape ``N x M`` and entry
  variance ``1/N``; the spectrum tends to ``MarchenkoPastur(M / N)``, whose
  mean is ``M / N`` and which has an atom ``1 - M/N`` at 0 when ``M < N``.
"""
from dataclasses import dataclass, replace

import numpy as np

from . import laws as _laws
from .ncexpr import NcPolynomial, eval_on_matrices, is_selfadjoint

__all__ = [
    "EnsembleSpec",
    "gaussian",
    "sample",
    "poly_spectrum",
    "ks_distance",
    "ks_two_sample",
    "compare",
    "Distances",
    "write_spectrum",
]

_KINDS = ("wigner", "wishart")


@dataclass(frozen=True)
class EnsembleSpec:
    kind: str
    N: int
    M: int = None
    seed: int = 0
    complex_entries: bool = False

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown ensemble kind {self.kind!r} (expected one of {_KINDS})")
        if int(self.N) < 2:
            raise ValueError("N must be >= 2")
        if self.kind == "wishart" and (self.M is None or int(self.M) < 1):
            raise ValueError("wishart needs M >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @classmethod
    def wishart_ratio(cls, N, ratio, seed=0):
        return cls("wishart", N, max(1, int(round(ratio * N))), seed)

    @property
    def ratio(self):
        return None if self.kind == "wigner" else self.M / self.N

    def law(self):
        """Limiting spectral law in the :mod:`freeconv.laws` convention."""
        if self.kind == "wigner":
            return _laws.Semicircle(0.0, 1.0)
        return _laws.MarchenkoPastur(self.ratio, 1.0)

    def resized(self, N):
        """Same ensemble at size ``N`` (Wishart keeps its ratio)."""
        if N == self.N:
            return self
        M = None if self.M is None else max(1, int(round(self.M * N / self.N)))
        return replace(self, N=N, M=M)


def gaussian(seed, index, count):
    """``count`` standard normals for key ``(seed, index)`` (Box-Muller)."""
    bitgen = np.random.Philox(key=np.array([seed, index], dtype=np.uint64))
    pairs = (count + 1) // 2
    raw = bitgen.random_raw(2 * pairs)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    u1, u2 = u[:pairs], u[pairs:]
    rad = np.sqrt(-2.0 * np.log(u1))
    out = np.empty(2 * pairs)
    out[0::2] = rad * np.cos(2 * np.pi * u2)
    out[1::2] = rad * np.sin(2 * np.pi * u2)
    return out[:count]


def sample(spec, index=0):
    """One matrix of the ensemble; ``index`` selects an independent draw."""
    N = int(spec.N)
    if spec.kind == "wigner":
        if spec.complex_entries:
            g = gaussian(spec.seed, index, 2 * N * N).reshape(2, N, N)
            a = (g[0] + 1j * g[1]) / np.sqrt(2.0)
            w = (a + a.conj().T) / np.sqrt(2.0 * N)
            w[np.diag_indices(N)] = w.diagonal().real
            return w
        a = gaussian(spec.seed, index, N * N).reshape(N, N)
        return (a + a.T) / np.sqrt(2.0 * N)
    M = int(spec.M)
    if spec.complex_entries:
        g = gaussian(spec.seed, index, 2 * N * M).reshape(2, N, M)
        x = (g[0] + 1j * g[1]) / np.sqrt(2.0 * N)
        w = x @ x.conj().T
        w[np.diag_indices(N)] = w.diagonal().real
        return 0.5 * (w + w.conj().T)
    x = gaussian(spec.seed, index, N * M).reshape(N, M) / np.sqrt(N)
    w = x @ x.T
    return 0.5 * (w + w.T)


def poly_spectrum(p, specs, N, seed, trial=0):
    """Eigenvalues of ``p`` evaluated on independent ensemble draws.

    ``specs`` maps each variable to an :class:`EnsembleSpec` (resized to
    ``N``; its own seed is ignored in favour of ``seed``).  Selfadjoint
    polynomials give sorted real eigenvalues, others complex ones.
    """
    if not isinstance(p, NcPolynomial):
        raise TypeError("poly_spectrum expects an NcPolynomial")
    mats = {}
    for pos, name in enumerate(p.variables):
        if name not in specs:
            raise KeyError(f"no ensemble given for variable {name!r}")
        spec = replace(specs[name].resized(N), seed=seed)
        mats[name] = sample(spec, index=trial * len(p.variables) + pos)
    A = eval_on_matrices(p, mats)
    if is_selfadjoint(p):
        A = 0.5 * (A + A.conj().T)
        return np.linalg.eigvalsh(A)
    return np.linalg.eigvals(A)


# ---------------------------------------------------------------- distances

def _curve_cdf(curve):
    from .recover import cumulative

    grid = np.asarray(getattr(curve, "grid", None) if not isinstance(curve, tuple) else curve[0], float)
    values = np.asarray(getattr(curve, "values", None) if not isinstance(curve, tuple) else curve[1], float)
    return grid, cumulative(grid, values)


def ks_distance(samples, curve):
    """Kolmogorov-Smirnov distance between samples and a density curve.

    ``curve`` is a :class:`~freeconv.recover.DensityCurve` or ``(grid, values)``;
    its CDF is the normalized cumulative trapezoid.
    """
    x = np.sort(np.asarray(samples, float).ravel())
    if x.size == 0:
        raise ValueError("empty sample")
    grid, cdf = _curve_cdf(curve)
    F = np.interp(x, grid, cdf, left=0.0, right=1.0)
    n = x.size
    hi = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    return float(max(np.max(hi - F), np.max(F - lo)))


def ks_two_sample(a, b):
    a = np.sort(np.asarray(a, float).ravel())
    b = np.sort(np.asarray(b, float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample")
    pts = np.concatenate([a, b])
    Fa = np.searchsorted(a, pts, side="right") / a.size
    Fb = np.searchsorted(b, pts, side="right") / b.size
    return float(np.max(np.abs(Fa - Fb)))


@dataclass(frozen=True)
class Distances:
    ks: float = None
    radial_sup: float = None
    chi2: float = None
    dof: int = None
    centroid: complex = None

    def as_dict(self):
        return {k: v for k, v in self.__dict__.items() if v is not None}


def compare(spectrum, target, cell=5):
    """Distances between a sampled spectrum and an analytic curve or field.

    Real spectra against a density curve (or another sample) give the KS
    distance.  Complex spectra against a Brown field give the sup-distance of
    the radial CDFs about the field's centroid and a chi-square of counts on
    ``cell x cell`` blocks of grid cells (blocks expecting fewer than 5
    eigenvalues are pooled).
    """
    from .recover import BrownField, radial_cdf, _cell_weights

    spectrum = np.asarray(spectrum)
    if spectrum.size == 0:
        raise ValueError("empty spectrum")
    if not isinstance(target, BrownField):
        if isinstance(target, np.ndarray) or isinstance(target, list):
            return Distances(ks=ks_two_sample(spectrum.real, np.asarray(target).real))
        return Distances(ks=ks_distance(spectrum.real, target))
    field = target
    z = spectrum.astype(complex).ravel()
    w = field.values * _cell_weights(field.re, field.im)
    total = w.sum()
    X, Y = np.meshgrid(field.re, field.im)
    c = complex((w * X).sum() / total, (w * Y).sum() / total)
    r_emp = np.sort(np.abs(z - c))
    radii, cdf = radial_cdf(field, center=c)
    emp = np.searchsorted(r_emp, radii, side="right") / r_emp.size
    sup = float(np.max(np.abs(emp - cdf)))
    # chi-square on coarse blocks of the field grid
    hs, ht = field.fd_step
    se = np.concatenate([field.re - hs / 2, [field.re[-1] + hs / 2]])
    te = np.concatenate([field.im - ht / 2, [field.im[-1] + ht / 2]])
    se, te = se[::cell], te[::cell]
    if se[-1] < field.re[-1] + hs / 2:
        se = np.append(se, field.re[-1] + hs / 2)
    if te[-1] < field.im[-1] + ht / 2:
        te = np.append(te, field.im[-1] + ht / 2)
    counts, _, _ = np.histogram2d(z.imag, z.real, bins=[te, se])
    iy = np.clip(np.searchsorted(te, field.im, side="right") - 1, 0, len(te) - 2)
    ix = np.clip(np.searchsorted(se, field.re, side="right") - 1, 0, len(se) - 2)
    expected = np.zeros_like(counts)
    np.add.at(expected, (iy[:, None].repeat(len(ix), 1), ix[None, :].repeat(len(iy), 0)), w / total)
    inside = counts.sum()
    expected *= inside
    big = expected >= 5
    o = np.append(counts[big], counts[~big].sum())
    e = np.append(expected[big], expected[~big].sum())
    keep = e > 0
    chi2 = float(np.sum((o[keep] - e[keep]) ** 2 / e[keep]))
    return Distances(radial_sup=sup, chi2=chi2, dof=int(keep.sum() - 1), centroid=c)


def write_spectrum(path, values, header=()):
    """One value per line; complex values as ``re,im``."""
    values = np.asarray(values)
    with open(path, "w", encoding="utf-8") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        if np.iscomplexobj(values):
            for v in values:
                fh.write(f"{float(v.real)!r},{float(v.imag)!r}\n")
        else:
            for v in values:
                fh.write(f"{float(v)!r}\n")

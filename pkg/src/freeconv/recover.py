"""Measures from Cauchy transforms.

* 1-D: Stieltjes inversion ``rho_eps(t) = -Im G(t + i eps) / pi`` on an
  epsilon schedule, extrapolated to ``eps = 0`` by Richardson's scheme.
* 2-D: the regularized Brown density
  ``(1/pi) Re d/d(conj lambda) G_eps(lambda)`` with the Wirtinger derivative
  ``(d/ds + i d/dt) / 2`` taken by finite differences on the grid.
"""
from dataclasses import dataclass, field

import numpy as np

from . import subord
from .errors import FreeconvError
from .linpen import lambda_block, lambda_embed

__all__ = [
    "DensityCurve",
    "BrownField",
    "richardson",
    "density_1d",
    "brown_field",
    "brown_from_values",
    "measure_stats",
    "radial_cdf",
    "cumulative",
]

DEFAULT_SCHEDULE = (0.05, 0.025, 0.0125)


class EvaluationError(FreeconvError):
    """An evaluator failed; ``location`` is the offending argument."""

    def __init__(self, message, location=None):
        self.location = location
        super().__init__(message)


@dataclass(frozen=True)
class DensityCurve:
    grid: np.ndarray
    values: np.ndarray
    epsilon_used: tuple
    mass: float
    atoms: tuple = ()
    raw: np.ndarray = field(default=None, repr=False)

    @property
    def deficit(self):
        return 1.0 - self.mass


@dataclass(frozen=True)
class BrownField:
    re: np.ndarray
    im: np.ndarray
    values: np.ndarray  # shape (len(im), len(re))
    epsilon: float
    fd_step: tuple
    mass: float
    g: np.ndarray = field(default=None, repr=False)
    failed: np.ndarray = field(default=None, repr=False)
    border: np.ndarray = field(default=None, repr=False)

    @property
    def failed_count(self):
        return 0 if self.failed is None else int(self.failed.sum())


def _trapezoid(y, x, axis=-1):
    return np.trapezoid(y, x, axis=axis) if hasattr(np, "trapezoid") else np.trapz(y, x, axis=axis)


def richardson(values, eps, order=None):
    """Extrapolate ``values[k] ~ f(eps[k])`` to ``eps = 0`` (Neville's scheme).

    ``order`` caps the polynomial degree in ``eps`` (default: all levels,
    ``len(eps) - 1``); with ``order = 1`` only the two smallest ``eps`` are used.
    """
    eps = np.asarray(eps, float)
    vals = [np.asarray(v, float) for v in values]
    k = len(eps) if order is None else min(len(eps), int(order) + 1)
    eps, vals = eps[-k:], vals[-k:]
    table = list(vals)
    for level in range(1, k):
        table = [
            (eps[i] * table[i + 1] - eps[i + level] * table[i]) / (eps[i] - eps[i + level])
            for i in range(k - level)
        ]
    return table[0]


def _atom_nodes(raw, eps):
    """Nodes where ``-Im G / pi`` grows like ``1/eps`` along the schedule.

    That growth is the signature of a point mass within ``eps`` of the node;
    extrapolating it as a density would be meaningless, so such nodes are
    dropped from the curve (the atom shows up in the mass deficit instead).
    """
    if len(eps) < 2:
        return np.zeros(raw[0].shape, bool)
    out = np.ones(raw[0].shape, bool)
    for k in range(len(eps) - 1):
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = raw[k + 1] / raw[k]
        out &= ratio >= 0.9 * eps[k] / eps[k + 1]
    return out & (raw[-1] * eps[-1] * np.pi > 1e-3)


def density_1d(evaluator, grid, eps_schedule=DEFAULT_SCHEDULE, order=None, atom_threshold=0.03):
    """Density by Stieltjes inversion with epsilon extrapolation.

    Parameters
    ----------
    evaluator : callable
        Maps an array of ``z`` (``Im z > 0``) to ``G(z)``.
    grid : array_like
        Ascending real points.
    eps_schedule : sequence of float
        Strictly decreasing positive offsets.
    atom_threshold : float
        Mass deficit above which candidate atoms are reported.
    """
    grid = np.asarray(grid, float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be ascending with at least two points")
    eps = tuple(float(e) for e in eps_schedule)
    if not eps or any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps_schedule must be strictly decreasing positives")
    raw = []
    last_G = None
    for e in eps:
        z = grid + 1j * e
        try:
            G = np.asarray(evaluator(z), dtype=complex)
        except FreeconvError as exc:
            raise EvaluationError(f"evaluator failed on Im z = {e}: {exc}", location=e) from exc
        if not np.all(np.isfinite(G)):
            i = int(np.flatnonzero(~np.isfinite(G))[0])
            raise EvaluationError(f"non-finite transform at z = {z[i]}", location=z[i])
        raw.append(-G.imag / np.pi)
        last_G = G
    values = np.clip(richardson(raw, eps, order), 0.0, None)
    spike = _atom_nodes(raw, eps)
    values[spike] = 0.0
    mass = float(_trapezoid(values, grid))
    atoms = ()
    if 1.0 - mass > atom_threshold:
        weight = eps[-1] * np.abs(last_G.imag)
        floor = max(0.01, 0.25 * (1.0 - mass))
        peaks = [
            i for i in range(len(grid))
            if weight[i] > floor
            and (i == 0 or weight[i] >= weight[i - 1])
            and (i == len(grid) - 1 or weight[i] >= weight[i + 1])
        ]
        atoms = tuple((float(grid[i]), float(weight[i])) for i in peaks)
    return DensityCurve(grid, values, eps, mass, atoms, np.array(raw))


def brown_from_values(g, re, im, eps, failed=None):
    """Brown density from values ``g[j, i] = G_eps(re[i] + 1j * im[j])``."""
    re = np.asarray(re, float)
    im = np.asarray(im, float)
    g = np.asarray(g, dtype=complex)
    if re.size < 2 or im.size < 2:
        raise ValueError("Brown grid needs at least two points per axis")
    hs, ht = float(re[1] - re[0]), float(im[1] - im[0])
    if not (np.allclose(np.diff(re), hs, rtol=1e-9) and np.allclose(np.diff(im), ht, rtol=1e-9)):
        raise ValueError("Brown grid must be uniformly spaced")
    failed = np.zeros(g.shape, bool) if failed is None else np.asarray(failed, bool)
    gg = np.where(failed, 0.0, g)
    ds = np.gradient(gg, hs, axis=1)
    dt = np.gradient(gg, ht, axis=0)
    dens = (0.5 * (ds + 1j * dt)).real / np.pi
    # anything differenced against a failed node is unusable
    touched = failed.copy()
    touched[:, 1:] |= failed[:, :-1]
    touched[:, :-1] |= failed[:, 1:]
    touched[1:, :] |= failed[:-1, :]
    touched[:-1, :] |= failed[1:, :]
    dens = np.where(touched, 0.0, np.clip(dens, 0.0, None))
    border = np.zeros(g.shape, bool)
    border[0, :] = border[-1, :] = border[:, 0] = border[:, -1] = True
    mass = float(_trapezoid(_trapezoid(dens, re, axis=1), im))
    return BrownField(re, im, dens, float(eps), (hs, ht), mass, g, touched, border)


def brown_field(pencil, law_map, re, im, eps=1e-3, opts=None, delta=None):
    """Regularized Brown density of the polynomial behind a corner-2 pencil.

    Nodes whose fixed point fails are flagged in ``failed`` (together with
    their finite-difference neighbours) and contribute zero density.
    """
    if pencil.corner != 2:
        raise ValueError("brown_field needs a hermitized (corner 2) pencil")
    if not eps > 0:
        raise ValueError("eps must be positive")
    re = np.asarray(re, float)
    im = np.asarray(im, float)
    lam = (re[None, :] + 1j * im[:, None]).ravel()
    b = lambda_embed(pencil, lambda_block(lam, eps), delta=delta)
    G, status, _, _ = subord.pencil_solve(pencil, law_map, b, opts)
    g = G[:, 1, 0].reshape(im.size, re.size)
    failed = (status != subord.OK).reshape(g.shape) | ~np.isfinite(g)
    return brown_from_values(g, re, im, eps, failed)


# -------------------------------------------------------------- statistics

def cumulative(grid, values):
    """Normalized cumulative trapezoid (a CDF on ``grid``)."""
    grid = np.asarray(grid, float)
    values = np.asarray(values, float)
    steps = 0.5 * (values[1:] + values[:-1]) * np.diff(grid)
    cdf = np.concatenate([[0.0], np.cumsum(steps)])
    total = cdf[-1]
    return cdf / total if total > 0 else cdf


def radial_cdf(field, radii=None, center=None):
    """Mass within distance ``r`` of ``center`` (default: the centroid).

    Returns ``(radii, cdf)`` with the CDF normalized by the total mass.
    """
    X, Y = np.meshgrid(field.re, field.im)
    w = field.values * _cell_weights(field.re, field.im)
    total = w.sum()
    if total <= 0:
        raise ValueError("field has no mass")
    if center is None:
        center = complex((w * X).sum() / total, (w * Y).sum() / total)
    r = np.abs(X + 1j * Y - center)
    if radii is None:
        radii = np.linspace(0.0, r.max(), 200)
    radii = np.asarray(radii, float)
    order = np.argsort(r, axis=None)
    rs = r.ravel()[order]
    cw = np.cumsum(w.ravel()[order]) / total
    idx = np.searchsorted(rs, radii, side="right")
    cdf = np.where(idx > 0, cw[np.maximum(idx - 1, 0)], 0.0)
    return radii, cdf


def _cell_weights(re, im):
    def w1(x):
        d = np.diff(x)
        out = np.zeros(x.size)
        out[:-1] += d / 2
        out[1:] += d / 2
        return out

    return w1(np.asarray(im))[:, None] * w1(np.asarray(re))[None, :]


def measure_stats(obj):
    """Mass, mean and variance (curve) or mass, centroid and radial CDF (field)."""
    if isinstance(obj, DensityCurve):
        x, y = obj.grid, obj.values
        if x.size == 0:
            raise ValueError("empty grid")
        mass = float(_trapezoid(y, x))
        if mass <= 0:
            raise ValueError("curve has no mass")
        mean = float(_trapezoid(x * y, x)) / mass
        var = float(_trapezoid((x - mean) ** 2 * y, x)) / mass
        return {"mass": mass, "mean": mean, "variance": var}
    if isinstance(obj, BrownField):
        if obj.re.size == 0 or obj.im.size == 0:
            raise ValueError("empty grid")
        w = obj.values * _cell_weights(obj.re, obj.im)
        mass = float(w.sum())
        X, Y = np.meshgrid(obj.re, obj.im)
        c = complex((w * X).sum() / mass, (w * Y).sum() / mass) if mass > 0 else 0j
        radii, cdf = radial_cdf(obj, center=c) if mass > 0 else (np.zeros(0), np.zeros(0))
        return {"mass": mass, "centroid": c, "radii": radii, "radial_cdf": cdf}
    raise TypeError("measure_stats expects a DensityCurve or BrownField")

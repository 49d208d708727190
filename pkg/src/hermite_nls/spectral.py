"""Diagonal spectral function pi_H(lambda; x, x) of the harmonic oscillator.

pi_H(lambda; x, x) = sum over modes with eigenvalue <= lambda of phi_l(x)^2.
Every energy shell |l| = n contributes S_n(x) = sum_{|l|=n} prod_i phi_{l_i}(x_i)^2,
which is a discrete convolution of the 1D squares, so both pointwise values
and L^r norms over R^d are cheap.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .hermite import QuadratureGrid, hermite_functions, n_modes
from .stats import linear_fit


class GridTruncationWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class SpectralFunctionCurve:
    lams: np.ndarray
    points: np.ndarray
    values: np.ndarray  # (len(lams), len(points))
    increment_norms: dict = field(default_factory=dict)


def _level_range(lam_lo, lam_hi, dim):
    """Shell levels n with lam_lo < 2n + d <= lam_hi."""
    lo = 0 if np.isneginf(lam_lo) else math.floor((lam_lo - dim) / 2) + 1
    hi = math.floor((lam_hi - dim) / 2)
    return max(lo, 0), hi


def shell_functions(points, dim, max_level):
    """S_n(x) for n = 0..max_level at scattered points of shape (P, d)."""
    points = np.atleast_2d(np.asarray(points, float))
    sq = [hermite_functions(max_level, points[:, i]) ** 2 for i in range(dim)]
    acc = sq[0]
    for a in sq[1:]:
        nxt = np.zeros_like(acc)
        for n in range(max_level + 1):
            nxt[n] = np.einsum("kp,kp->p", acc[:n + 1], a[n::-1])
        acc = nxt
    return acc


def spectral_diag(lam, x, dim=None):
    """pi_H(lam; x, x) at one point (shape (d,)) or many points (shape (P, d))."""
    x = np.asarray(x, float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    dim = pts.shape[1] if dim is None else dim
    _, hi = _level_range(-np.inf, lam, dim)
    if hi < 0:
        out = np.zeros(len(pts))
    else:
        out = shell_functions(pts, dim, hi).sum(axis=0)
    return float(out[0]) if single else out


def spectral_curve(lams, points, dim):
    """pi_H on a lambda grid times a set of points."""
    lams = np.sort(np.asarray(lams, float))
    pts = np.atleast_2d(np.asarray(points, float))
    _, hi = _level_range(-np.inf, lams[-1], dim)
    if hi < 0:
        return SpectralFunctionCurve(lams, pts, np.zeros((len(lams), len(pts))))
    cum = np.cumsum(shell_functions(pts, dim, hi), axis=0)
    vals = np.zeros((len(lams), len(pts)))
    for i, lam in enumerate(lams):
        _, k = _level_range(-np.inf, lam, dim)
        if k >= 0:
            vals[i] = cum[k]
    return SpectralFunctionCurve(lams, pts, vals)


def eigenvalue_count(lam, dim):
    """Number of eigenvalues <= lam, with multiplicity."""
    _, hi = _level_range(-np.inf, lam, dim)
    return 0 if hi < 0 else n_modes(dim, hi)


def trace_integral(lam, dim):
    """Integral over R^d of pi_H(lam; x, x) by exact Gauss-Hermite quadrature."""
    _, hi = _level_range(-np.inf, lam, dim)
    if hi < 0:
        return 0.0
    grid = QuadratureGrid(dim, hi + 1)
    pts = grid.tensor_nodes().reshape(-1, dim)
    vals = shell_functions(pts, dim, hi).sum(axis=0)
    return float(np.sum(grid.tensor_lifted().ravel() * vals))


# ---------------------------------------------------------------------------
# Mehler-type bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MehlerFit:
    C: float
    c: float
    growth_exponent: float
    raw_max_residual: float
    max_violation: float
    n_samples: int


def verify_mehler_bound(lams, points, dim):
    """Fit log pi_H <= log C + (d/2) log(lam) - c |x|^2 / lam over all samples.

    The least-squares fit is lifted by its largest residual, so the reported
    (C, c) pair is an upper envelope of every sample; ``max_violation`` is
    re-measured against it. ``growth_exponent`` is a separate free fit of the
    lam-exponent on the x = 0 samples (or on all samples when the origin is
    not part of ``points``).
    """
    curve = spectral_curve(lams, points, dim)
    lam_col = np.repeat(curve.lams[:, None], len(curve.points), axis=1)
    r2 = np.broadcast_to(np.sum(curve.points ** 2, axis=1), lam_col.shape)
    vals = curve.values
    keep = vals > 0
    if not np.any(keep):
        raise ValueError("all spectral function samples vanish; nothing to fit")
    log_lam = np.log(lam_col[keep])
    y = np.log(vals[keep]) - dim / 2 * log_lam
    design = np.column_stack([np.ones(keep.sum()), -r2[keep] / lam_col[keep]])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    shift = float(resid.max())
    env = design @ coef + shift
    violation = float(np.max(y - env))

    origin = np.all(curve.points == 0, axis=1)
    cols = origin if np.any(origin) else np.ones(len(curve.points), bool)
    sub = vals[:, cols]
    lam_sub = lam_col[:, cols]
    ok = sub > 0
    b = linear_fit(np.log(lam_sub[ok]), np.log(sub[ok])).slope
    return MehlerFit(C=float(np.exp(coef[0] + shift)), c=float(coef[1]), growth_exponent=float(b),
                     raw_max_residual=shift, max_violation=max(violation, 0.0),
                     n_samples=int(keep.sum()))


def growth_exponent(lams, dim, x=None):
    """Fitted exponent b in pi_H(lam; x, x) ~ lam^b (default x = 0)."""
    x = np.zeros(dim) if x is None else np.asarray(x, float)
    curve = spectral_curve(lams, x[None, :], dim)
    v = curve.values[:, 0]
    keep = v > 0
    return linear_fit(np.log(curve.lams[keep]), np.log(v[keep]))


# ---------------------------------------------------------------------------
# Increments over unit energy windows
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UniformGrid:
    """Uniform tensor grid on [-half_width, half_width]^d for trapezoid sums."""

    dim: int
    half_width: float
    spacing: float

    @property
    def axis(self):
        n = int(round(2 * self.half_width / self.spacing)) + 1
        return np.linspace(-self.half_width, self.half_width, n)

    @property
    def cell(self):
        a = self.axis
        return (a[1] - a[0]) ** self.dim


def default_increment_grid(lam_hi, dim):
    top = max(_level_range(-np.inf, lam_hi, dim)[1], 0)
    spacing = math.pi / (6.0 * math.sqrt(2 * top + 2))
    return UniformGrid(dim, math.sqrt(max(lam_hi, 1.0)) + 8.0, spacing)


def _window_sum_on_grid(axis, dim, levels):
    """Sum of S_n over ``levels`` on the tensor grid axis^d."""
    top = max(levels)
    a = hermite_functions(top, axis) ** 2  # (K+1, P)
    lev = np.arange(top + 1)
    in_window = np.isin(lev, list(levels))
    if dim == 1:
        return a[in_window].sum(axis=0)
    if dim == 2:
        mask = np.isin(lev[:, None] + lev[None, :], list(levels)).astype(float)
        return a.T @ mask @ a
    # dim 3: peel off the first axis
    out = np.zeros((len(axis),) * 3)
    for k in range(top + 1):
        shifted = [n - k for n in levels if n - k >= 0]
        if not shifted:
            continue
        mask = np.isin(lev[:, None] + lev[None, :], shifted).astype(float)
        out += a[k][:, None, None] * (a.T @ mask @ a)[None, :, :]
    return out


def _grid_lr(values, r, cell):
    a = np.abs(values)
    if np.isinf(r):
        return float(a.max())
    return float((cell * np.sum(a ** r)) ** (1.0 / r))


def cluster_increment_norm(lam, mu, r, dim, grid=None, c0=1.0):
    """|| pi_H(lam + mu; x, x) - pi_H(lam; x, x) ||_{L^r(R^d)}.

    Integrated by the trapezoid rule on a uniform grid wide enough to contain
    the classically allowed region; warns when the outermost band of the grid
    still carries more than 1e-8 of the integrand.
    """
    if abs(mu) > c0:
        raise ValueError(f"|mu| must be <= c0 = {c0}")
    if mu == 0:
        return 0.0
    lo_lam, hi_lam = sorted((lam, lam + mu))
    lo, hi = _level_range(lo_lam, hi_lam, dim)
    if hi < lo:
        return 0.0
    grid = default_increment_grid(hi_lam, dim) if grid is None else grid
    axis = grid.axis
    vals = _window_sum_on_grid(axis, dim, range(lo, hi + 1))
    if not np.isinf(r):
        total = np.sum(np.abs(vals) ** r)
        inner = np.abs(axis) <= grid.half_width - 2.0
        sl = np.ix_(*([inner] * dim))
        outer = total - np.sum(np.abs(vals[sl]) ** r)
        if total > 0 and outer / total > 1e-8:
            warnings.warn(f"increment integrand has relative mass {outer / total:.2e} near the "
                          f"grid boundary (half-width {grid.half_width})", GridTruncationWarning)
    return _grid_lr(vals, r, grid.cell)


def sup_increment(lam, mu, dim, grid=None, check=True):
    """Grid maximum of the increment, i.e. the r = inf proxy.

    With ``check`` the grid is refined by a factor 2 and the two maxima must
    agree to 2%; otherwise a ``GridTruncationWarning`` is issued.
    """
    lo_lam, hi_lam = sorted((lam, lam + mu))
    grid = default_increment_grid(hi_lam, dim) if grid is None else grid
    val = cluster_increment_norm(lam, mu, np.inf, dim, grid)
    if check and val > 0:
        fine = UniformGrid(grid.dim, grid.half_width, grid.spacing / 2)
        ref = cluster_increment_norm(lam, mu, np.inf, dim, fine)
        if abs(ref - val) > 0.02 * ref:
            warnings.warn(f"sup proxy changed by {abs(ref - val) / ref:.1%} under refinement",
                          GridTruncationWarning)
        val = max(val, ref)
    return val


def increment_exponent(r, dim, lam_range=(20.0, 200.0), mu=1.0, n_samples=None):
    """Fit the lam-exponent of the L^r increment norm over ``lam_range``.

    Samples sit half a window below each eigenvalue, lam = 2n + d - mu/2, so
    the window (lam, lam + mu] always holds exactly one shell.
    """
    lo = math.ceil((lam_range[0] - dim + mu / 2) / 2)
    hi = math.floor((lam_range[1] - dim + mu / 2) / 2)
    levels = np.arange(lo, hi + 1)
    if n_samples is not None and n_samples < len(levels):
        idx = np.unique(np.round(np.geomspace(1, len(levels), n_samples)).astype(int) - 1)
        levels = levels[idx]
    lams = 2.0 * levels + dim - mu / 2
    norms = np.array([cluster_increment_norm(l, mu, r, dim) for l in lams])
    fit = linear_fit(np.log(lams), np.log(norms))
    return fit, lams, norms


def predicted_increment_exponent(r, dim):
    """Exponent (d/2)(1 + 1/r) - 1 of the unit-window increment bound."""
    inv = 0.0 if np.isinf(r) else 1.0 / r
    return dim / 2 * (1 + inv) - 1


# ---------------------------------------------------------------------------
# Cluster differences
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DifferenceBound:
    total: float
    ratio: float


def cluster_difference_bound(j, x, y, dim=None):
    """sum_{n in I(j)} |phi_n(x) - phi_n(y)|^2 and its ratio to |x - y|^2 j."""
    from .hermite import cluster_level, multi_indices, shell_slice

    x = np.asarray(x, float)
    y = np.asarray(y, float)
    dim = len(x) if dim is None else dim
    level = cluster_level(j, dim)
    if level is None:
        return DifferenceBound(0.0, 0.0)
    ell = multi_indices(dim, level)[shell_slice(dim, level)]
    px = np.ones(len(ell))
    py = np.ones(len(ell))
    for i in range(dim):
        phi = hermite_functions(level, np.array([x[i], y[i]]))
        px *= phi[ell[:, i], 0]
        py *= phi[ell[:, i], 1]
    total = float(np.sum((px - py) ** 2))
    dist2 = float(np.sum((x - y) ** 2))
    ratio = total / (dist2 * j) if dist2 > 0 else 0.0
    return DifferenceBound(total, ratio)


def cluster_sup(j, dim, grid=None):
    """Grid maximum over x of sum_{n in I(j)} phi_n(x)^2."""
    from .hermite import cluster_level

    level = cluster_level(j, dim)
    if level is None:
        return 0.0
    grid = default_increment_grid(2 * level + dim, dim) if grid is None else grid
    return float(np.max(_window_sum_on_grid(grid.axis, dim, [level])))


def increment_rows(lams, mu, r, dim, fitted_exponent=float("nan"), residuals=None):
    """Rows (lambda, mu, r, d, norm, fitted_exponent, residual) for CSV output."""
    rows = []
    norms = [cluster_increment_norm(l, mu, r, dim) for l in lams]
    for i, (l, nrm) in enumerate(zip(lams, norms)):
        res = float("nan") if residuals is None else float(residuals[i])
        rows.append((float(l), float(mu), float(r), int(dim), float(nrm), float(fitted_exponent), res))
    return rows

"""Lens transform between the harmonic and the free Schrodinger equations.

For a solution u(s, y) of i u_s - H u = lam cos(2s)^theta |u|^(p-1) u with
theta = (d/2)(p-1) - 2,

    v(t, x) = (1 + 4t^2)^(-d/4) u(arctan(2t)/2, x / sqrt(1 + 4t^2)) exp(i |x|^2 t / (1 + 4t^2))

solves i v_t + Delta v = lam |v|^(p-1) v. The free side is represented on a
periodic box and integrated with a Fourier split-step solver; the harmonic
side is the Hermite solver of :mod:`nls`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .hermite import (SpectralField, _apply_axes, eigenvalues, forward_transform, grid_for,
                      hermite_functions, to_box)
from .nls import EquationSpec, solve_final


class ContainmentError(RuntimeError):
    def __init__(self, message, boundary_mass):
        super().__init__(message)
        self.boundary_mass = boundary_mass


# ---------------------------------------------------------------------------
# Time map
# ---------------------------------------------------------------------------

def lens_time(t):
    """s = arctan(2t)/2."""
    return np.arctan(2 * np.asarray(t, float)) / 2 if np.ndim(t) else math.atan(2 * t) / 2


def lens_time_inverse(s):
    """t = tan(2s)/2 for |s| < pi/4."""
    if np.any(np.abs(np.asarray(s)) >= math.pi / 4):
        raise ValueError("lens time is only defined for |s| < pi/4")
    return np.tan(2 * np.asarray(s, float)) / 2 if np.ndim(s) else math.tan(2 * s) / 2


@dataclass(frozen=True)
class LensMap:
    """The pair (s, t) linked by the lens time map, plus its amplitude factor."""

    dim: int
    t: float
    inverse: bool = False

    @property
    def s(self):
        return lens_time(self.t)

    @property
    def dilation(self):
        return math.sqrt(1 + 4 * self.t ** 2)

    @property
    def amplitude(self):
        return (1 + 4 * self.t ** 2) ** (-self.dim / 4)

    @classmethod
    def from_s(cls, dim, s, inverse=False):
        return cls(dim, float(lens_time_inverse(s)), inverse)


# ---------------------------------------------------------------------------
# Free fields on a periodic box
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FreeGrid:
    dim: int
    half_width: float
    n: int = 256

    @property
    def spacing(self):
        return 2 * self.half_width / self.n

    @property
    def axis(self):
        return -self.half_width + self.spacing * np.arange(self.n)

    @property
    def wavenumbers(self):
        return 2 * math.pi * sfft.fftfreq(self.n, d=self.spacing)

    @property
    def cell(self):
        return self.spacing ** self.dim

    def r2(self):
        a = self.axis ** 2
        out = a
        for _ in range(self.dim - 1):
            out = np.add.outer(out, a)
        return out

    def k2(self):
        k = self.wavenumbers ** 2
        out = k
        for _ in range(self.dim - 1):
            out = np.add.outer(out, k)
        return out


def box_half_width(t_max, max_eigenvalue, minimum=8.0):
    """max(8, 4 sqrt(1 + 4 t^2) sqrt(lambda_max))."""
    return max(minimum, 4 * math.sqrt(1 + 4 * t_max ** 2) * math.sqrt(max_eigenvalue))


@dataclass(frozen=True, eq=False)
class FreeField:
    grid: FreeGrid
    values: np.ndarray
    t: float = 0.0

    @property
    def dim(self):
        return self.grid.dim

    def l2(self):
        return float(np.sqrt(self.grid.cell * np.sum(np.abs(self.values) ** 2)))

    def boundary_fraction(self):
        """Share of the mass at sup-distance < R/2 from the box boundary."""
        a = np.abs(self.grid.axis) > self.grid.half_width / 2
        mask = np.zeros(self.values.shape, bool)
        for i in range(self.dim):
            shape = [1] * self.dim
            shape[i] = -1
            mask |= a.reshape(shape)
        m = np.abs(self.values) ** 2
        tot = m.sum()
        return float(m[mask].sum() / tot) if tot > 0 else 0.0

    def check_containment(self, tol=1e-10):
        frac = self.boundary_fraction()
        if frac > tol:
            raise ContainmentError(f"boundary mass fraction {frac:.2e} exceeds {tol:.0e} "
                                   f"at t = {self.t:g} (half-width {self.grid.half_width})", frac)
        return frac

    def distance(self, other):
        return float(np.sqrt(self.grid.cell * np.sum(np.abs(self.values - other.values) ** 2)))

    def evaluate_axes(self, axes):
        """Trigonometric interpolant evaluated on a tensor product of 1D point sets."""
        g = self.grid
        coef = sfft.fftn(self.values) / g.n ** g.dim
        k = g.wavenumbers
        mats = [np.exp(1j * np.outer(np.asarray(a) + g.half_width, k)) for a in axes]
        return _apply_axes(coef, mats, g.dim)


def free_gaussian(grid, t):
    """e^{it Delta} of pi^(-d/4) exp(-|x|^2/2) in closed form."""
    z = 1 + 2j * t
    return FreeField(grid, math.pi ** (-grid.dim / 4) * z ** (-grid.dim / 2)
                     * np.exp(-grid.r2() / (2 * z)), t)


# ---------------------------------------------------------------------------
# The transform
# ---------------------------------------------------------------------------

def lens_apply(u, t, grid, check=True):
    """Free field v(t) from the harmonic field u at s = arctan(2t)/2, by exact series summation."""
    m = LensMap(u.dim, t)
    y = grid.axis / m.dilation
    vals = _apply_axes(to_box(u.coeffs, u.dim, u.max_level),
                       [hermite_functions(u.max_level, y).T] * u.dim, u.dim)
    vals = m.amplitude * vals * np.exp(1j * grid.r2() * t / (1 + 4 * t ** 2))
    v = FreeField(grid, vals, t)
    if check:
        v.check_containment()
    return v


def lens_inverse(v, max_level, padding=None):
    """Harmonic field at s = arctan(2t)/2 from the free field v(t).

    u(s, y) = (1 + 4t^2)^(d/4) v(t, sqrt(1 + 4t^2) y) exp(-i |y|^2 t) is sampled at
    Gauss-Hermite nodes (Fourier series evaluated off the box grid) and
    transformed by quadrature.
    """
    t = v.t
    m = LensMap(v.dim, t)
    padding = max_level // 2 + 8 if padding is None else padding
    hg = grid_for(v.dim, max_level, 2, padding)
    y = hg.nodes
    vals = v.evaluate_axes([m.dilation * y] * v.dim)
    r2 = np.sum(hg.tensor_nodes() ** 2, axis=-1)
    vals = vals / m.amplitude * np.exp(-1j * r2 * t)
    return forward_transform(vals, hg, max_level)


# ---------------------------------------------------------------------------
# Free solver
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class FreeTrajectory:
    times: np.ndarray
    fields: list
    containment: list = field(default_factory=list)
    blowup_time: float | None = None


def _free_steps(v, lam, p, t0, t1, dt, k2):
    # Linear half steps outside: the harmonic solver puts the nonlinear
    # half steps outside, and the lens map carries one ordering almost onto
    # the other, which would make the two leading errors cancel.
    n = max(1, int(math.ceil(abs(t1 - t0) / abs(dt) - 1e-9)))
    h = (t1 - t0) / n
    half = np.exp(-1j * k2 * h / 2)
    v = sfft.fftn(v)
    for i in range(n):
        v = sfft.ifftn(half * v)
        if lam:
            v = v * np.exp(-1j * lam * h * np.abs(v) ** (p - 1))
        v = sfft.fftn(v)
        v = half * v
    return sfft.ifftn(v)


def free_solve(v0, spec, checkpoints, dt, containment_tol=1e-10):
    """Strang splitting for i v_t + Delta v = sign |v|^(p-1) v, stopping exactly at each checkpoint."""
    lam = spec.sign * spec.coupling
    k2 = v0.grid.k2()
    times, fields, cont = [v0.t], [v0], [v0.boundary_fraction()]
    v, t = np.array(v0.values), v0.t
    for tc in checkpoints:
        if tc == t:
            continue
        v = _free_steps(v, lam, spec.p, t, tc, dt, k2)
        t = tc
        if not np.all(np.isfinite(v)):
            return FreeTrajectory(np.array(times), fields, cont, t)
        f = FreeField(v0.grid, v, t)
        cont.append(f.check_containment(containment_tol))
        times.append(t)
        fields.append(f)
    return FreeTrajectory(np.array(times), fields, cont)


# ---------------------------------------------------------------------------
# Equivalence and scattering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EquivalenceReport:
    s_max: float
    dt: float
    residual_max: float
    residuals: tuple
    containment: float
    slope_fit: float | None = None

    def to_dict(self):
        return {"s_max": self.s_max, "dt": self.dt, "residual_max": self.residual_max,
                "containment": self.containment, "slope_fit": self.slope_fit}


def lens_spec(dim, p=3.0, sign=1, coupling=1.0):
    """Harmonic-side equation whose lens image is free NLS with the same nonlinearity."""
    return EquationSpec(dim=dim, p=p, sign=sign, theta=dim / 2 * (p - 1) - 2, coupling=coupling)


def equivalence_check(u0, spec, s_max, dt, n_checkpoints=8, grid=None, n_points=256,
                      half_width=None):
    """Max L^2 distance between the lens image of the harmonic solve and the free solve."""
    if not 0 < s_max < math.pi / 4:
        raise ValueError("s_max must lie in (0, pi/4)")
    s_pts = np.linspace(0.0, s_max, n_checkpoints + 1)
    t_pts = np.tan(2 * s_pts) / 2
    if grid is None:
        R = half_width or box_half_width(t_pts[-1], 2 * u0.max_level + u0.dim)
        grid = FreeGrid(u0.dim, R, n_points)
    v0 = lens_apply(u0, 0.0, grid)
    free = free_solve(v0, spec, t_pts[1:], dt)
    res = [v0.distance(lens_apply(u0, 0.0, grid))]
    u = u0
    for k in range(1, len(s_pts)):
        n = max(1, int(math.ceil((s_pts[k] - s_pts[k - 1]) / dt - 1e-9)))
        u = solve_final(u, spec, s_pts[k], (s_pts[k] - s_pts[k - 1]) / n, t0=s_pts[k - 1])
        img = lens_apply(u, t_pts[k], grid)
        res.append(img.distance(free.fields[k]))
    return EquivalenceReport(float(s_max), float(dt), float(max(res)), tuple(res),
                             float(max(free.containment)))


def equivalence_convergence(u0, spec, s_max, dts, **kw):
    """Residuals for several dt and the fitted log-log slope."""
    from .stats import loglog_slope

    reps = [equivalence_check(u0, spec, s_max, h, **kw) for h in dts]
    res = np.array([r.residual_max for r in reps])
    slope = loglog_slope(np.asarray(dts), res).slope
    return [EquivalenceReport(r.s_max, r.dt, r.residual_max, r.residuals, r.containment, slope)
            for r in reps], slope


@dataclass(eq=False)
class ScatteringReport:
    s_grid: np.ndarray
    t_grid: np.ndarray
    W: list                 # SpectralField W(t_k) = e^{-i t_k Delta} v(t_k) - v(0)
    differences: np.ndarray  # ||W_{k+1} - W_k||_{H^s}
    f_last: SpectralField
    f_extrapolated: SpectralField
    sobolev_s: float

    @property
    def monotone_tail(self):
        d = self.differences[-5:]
        return bool(np.all(np.diff(d) < 0))


def geometric_s_grid(n, ratio=0.5, first=None, sign=1):
    """s_k approaching sign * pi/4 with gaps shrinking by ``ratio``."""
    first = math.pi / 8 if first is None else first
    gap0 = math.pi / 4 - first
    return sign * (math.pi / 4 - gap0 * ratio ** np.arange(n))


def scattering_extract(u0, spec, s_grid=None, dt=1e-3, sobolev_s=0.0, n_points=10, ratio=0.5):
    """Scattering state from W(t) = e^{-itDelta} v(t) - v(0) along an s grid approaching +-pi/4.

    Through the lens transform e^{-itDelta} v(t) equals e^{isH} u(s), so W is
    computed exactly in the Hermite frame. The limit is reported both as the
    last value and as the linear extrapolation of the last two values to a
    vanishing gap pi/4 - |s|.
    """
    if s_grid is None:
        s_grid = geometric_s_grid(n_points, ratio)
    s_grid = np.asarray(s_grid, float)
    sign = 1.0 if s_grid[-1] > 0 else -1.0
    lam = eigenvalues(u0.dim, u0.max_level)
    W = []
    u, s_prev = u0, 0.0
    for s in s_grid:
        n = max(1, int(math.ceil(abs(s - s_prev) / dt - 1e-9)))
        u = solve_final(u, spec, s, (s - s_prev) / n, t0=s_prev)
        s_prev = s
        W.append(u.with_coeffs(u.coeffs * np.exp(1j * s * lam) - u0.coeffs))
    w_s = lam ** sobolev_s
    diffs = np.array([math.sqrt(np.sum(w_s * np.abs(W[k + 1].coeffs - W[k].coeffs) ** 2))
                      for k in range(len(W) - 1)])
    gaps = np.abs(sign * math.pi / 4 - s_grid)
    if len(W) >= 2:
        g1, g0 = gaps[-1], gaps[-2]
        extr = (g0 * W[-1].coeffs - g1 * W[-2].coeffs) / (g0 - g1)
    else:
        extr = W[-1].coeffs
    return ScatteringReport(s_grid, np.tan(2 * s_grid) / 2, W, diffs, W[-1],
                            u0.with_coeffs(extr), float(sobolev_s))

"""Split-step integration of i u_t - H u = sign * w(t) |u|^(p-1) u.

The linear flow is applied exactly in the Hermite frame. The nonlinear
sub-flow u -> u exp(-i sign |u|^(p-1) int w) is evaluated on a Gauss-Hermite
grid fine enough for the (p+1)-fold products that appear when projecting
|u|^(p-1) u back onto the level cap, so the projection is the exact Galerkin
truncation for odd integer p.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, special

from .hermite import (DegreeBudgetError, QuadratureGrid, SpectralField, analyze, eigenvalues,
                      grid_for, norm_grid, synthesize)


class BlowUpError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Equation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EquationSpec:
    """i u_t - H u = sign * coupling * cos(2t)^theta |u|^(p-1) u.

    sign = +1 is defocusing. ``coupling`` = 0 switches the nonlinearity off.
    Allowed weights: theta = 0, theta = (d/2)(p-1) - 2 (the image of free NLS
    under the lens transform) and theta = p - 3 for d = 2, 2 < p < 3.
    """

    dim: int = 2
    p: float = 3.0
    sign: int = 1
    potential: str = "harmonic"
    theta: float = 0.0
    coupling: float = 1.0

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 (defocusing) or -1 (focusing)")
        if self.potential not in ("harmonic", "none"):
            raise ValueError("potential must be 'harmonic' or 'none'")
        odd = float(self.p).is_integer() and int(self.p) % 2 == 1 and self.p >= 3
        sub = self.dim == 2 and 2 < self.p < 3
        if not (odd or sub):
            raise ValueError("p must be an odd integer >= 3, or lie in (2, 3) when d = 2")
        lens_theta = self.dim / 2 * (self.p - 1) - 2
        allowed = [0.0, lens_theta] + ([self.p - 3] if sub else [])
        if not any(abs(self.theta - a) < 1e-12 for a in allowed):
            raise ValueError(f"theta must be one of {allowed}")

    @property
    def odd_integer(self):
        return float(self.p).is_integer()

    @property
    def quadrature_order(self):
        return int(self.p) + 1 if self.odd_integer else 4

    @property
    def autonomous(self):
        return self.theta == 0.0

    @classmethod
    def cubic(cls, dim=2, **kw):
        return cls(dim=dim, p=3.0, **kw)

    def to_dict(self):
        return asdict(self)

    def weight(self, t):
        t = np.asarray(t, float)
        if self.theta == 0:
            return np.ones_like(t)
        return np.cos(2 * t) ** self.theta

    def weight_integral(self, a, b):
        """int_a^b cos(2 s)^theta ds, exact; the endpoints must satisfy |t| < pi/4 unless theta = 0."""
        return weight_integral(self.theta, a, b)


def weight_primitive(theta, t):
    """F(t) = int_0^t cos(2 s)^theta ds for |t| < pi/4 and theta > -1.

    With x = sin^2(2 s) the integral is (1/4) B_x(1/2, (theta + 1)/2), an
    incomplete beta function; F is odd.
    """
    t = np.asarray(t, float)
    if theta == 0:
        return t
    if np.any(np.abs(t) >= math.pi / 4):
        raise ValueError("time weight cos(2t)^theta is only used on |t| < pi/4")
    a, b = 0.5, (theta + 1) / 2
    x = np.sin(2 * t) ** 2
    return np.sign(t) * 0.25 * special.beta(a, b) * special.betainc(a, b, x)


def weight_integral(theta, a, b):
    if theta == 0:
        return b - a
    return float(weight_primitive(theta, b) - weight_primitive(theta, a))


def nonlinear_grid(spec, max_level, padding=0):
    order = spec.quadrature_order
    pad = padding if spec.odd_integer else padding + max_level // 2 + 4
    return grid_for(spec.dim, max_level, order, padding=pad)


def _check_grid(spec, max_level, grid):
    if grid.order < spec.quadrature_order:
        raise DegreeBudgetError(f"nonlinear term needs a grid of order >= {spec.quadrature_order}")
    grid.check_level(max_level)


# ---------------------------------------------------------------------------
# Sub-steps
# ---------------------------------------------------------------------------

def _nonlinear_flow(c, spec, max_level, grid, wint):
    """Exact flow of i u_t = sign w |u|^(p-1) u over a weight integral ``wint``, then projection."""
    if spec.coupling == 0 or wint == 0:
        return c
    vals = synthesize(c, spec.dim, max_level, grid)
    amp = np.abs(vals) ** (spec.p - 1)
    # Only the increment u (e^{i phase} - 1) is projected: it carries the
    # Gaussian weight of a (p+1)-fold product, which the grid integrates.
    incr = vals * np.expm1(-1j * spec.sign * spec.coupling * wint * amp)
    return c + analyze(incr, spec.dim, max_level, grid)


def strang_step(u, t, dt, spec, grid=None):
    """One Strang step from t to t + dt (dt may be negative)."""
    grid = nonlinear_grid(spec, u.max_level) if grid is None else grid
    _check_grid(spec, u.max_level, grid)
    c = _strang_coeffs(u.coeffs, t, dt, spec, u.max_level, grid, eigenvalues(u.dim, u.max_level))
    return u.with_coeffs(c)


def _strang_coeffs(c, t, dt, spec, max_level, grid, lam):
    if spec.potential != "harmonic":
        raise ValueError("the Hermite solver needs the harmonic potential")
    half = t + dt / 2
    c = _nonlinear_flow(c, spec, max_level, grid, spec.weight_integral(t, half))
    c = c * np.exp(-1j * dt * lam)
    return _nonlinear_flow(c, spec, max_level, grid, spec.weight_integral(half, t + dt))


# ---------------------------------------------------------------------------
# Conserved quantities
# ---------------------------------------------------------------------------

def mass(u):
    return float(np.sum(np.abs(u.coeffs) ** 2))


def potential_energy(u, spec, grid=None):
    """(2/(p+1)) int |u|^(p+1), i.e. 1/2 int |u|^4 for the cubic case."""
    grid = nonlinear_grid(spec, u.max_level) if grid is None else grid
    vals = synthesize(u.coeffs, u.dim, u.max_level, grid)
    integral = float(np.sum(grid.tensor_lifted() * np.abs(vals) ** (spec.p + 1)))
    return 2.0 / (spec.p + 1) * integral


def energy(u, spec, grid=None):
    """sum lambda |c|^2 + sign * coupling * (2/(p+1)) ||u||_{L^{p+1}}^{p+1}."""
    kinetic = float(np.sum(u.eigenvalues * np.abs(u.coeffs) ** 2))
    if spec.coupling == 0:
        return kinetic
    return kinetic + spec.sign * spec.coupling * potential_energy(u, spec, grid)


def _hs(c, lam, s):
    return float(np.sqrt(np.sum(lam ** s * np.abs(c) ** 2)))


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Trajectory:
    spec: EquationSpec
    times: np.ndarray
    snapshots: list
    diagnostics: dict
    blowup_time: float | None = None

    @property
    def final(self):
        return self.snapshots[-1]

    @property
    def blew_up(self):
        return self.blowup_time is not None

    def columns(self):
        return ["t"] + list(self.diagnostics)

    def rows(self):
        cols = [self.times] + [self.diagnostics[k] for k in self.diagnostics]
        return [tuple(float(c[i]) for c in cols) for i in range(len(self.times))]

    def drift(self, key):
        v = self.diagnostics[key]
        return float(np.max(np.abs(v - v[0])) / abs(v[0])) if v[0] != 0 else float(np.max(np.abs(v)))


def _n_steps(span, dt):
    n = span / dt
    k = int(math.floor(n + 1e-9))
    return k, span - k * dt


def solve(u0, spec, t_final, dt, grid=None, t0=0.0, probes=(), record_every=None,
          diagnostics=True):
    """Integrate from t0 to t_final with steps of size dt (negative dt runs backward).

    Diagnostics per step: mass, energy, h1 and, for every s in ``probes``,
    the H^s norm of the fluctuation u(t) - e^{-i(t - t0)H} u0. Snapshots are
    stored every ``record_every`` steps (default: only start and end).
    """
    if dt == 0 or (t_final - t0) * dt < 0:
        raise ValueError("dt must be non-zero and point from t0 to t_final")
    grid = nonlinear_grid(spec, u0.max_level) if grid is None else grid
    _check_grid(spec, u0.max_level, grid)
    lam = eigenvalues(u0.dim, u0.max_level)
    L = u0.max_level
    k, rest = _n_steps(t_final - t0, dt)
    steps = [dt] * k + ([rest] if abs(rest) > 1e-14 * abs(dt) else [])

    c = np.array(u0.coeffs)
    t = t0
    times = [t0]
    snaps = [u0]
    diag = {"mass": [], "energy": [], "h1": []} if diagnostics else {}
    for s in probes:
        diag[f"hs_fluct_{s:g}"] = []

    def record(cc, tt):
        if not diagnostics:
            return
        f = SpectralField(u0.dim, L, cc)
        diag["mass"].append(float(np.sum(np.abs(cc) ** 2)))
        diag["energy"].append(energy(f, spec, grid))
        diag["h1"].append(_hs(cc, lam, 1.0))
        if probes:
            fl = cc - u0.coeffs * np.exp(-1j * (tt - t0) * lam)
            for s in probes:
                diag[f"hs_fluct_{s:g}"].append(_hs(fl, lam, s))

    record(c, t)
    blow = None
    for i, h in enumerate(steps):
        with np.errstate(over="ignore", invalid="ignore"):
            c = _strang_coeffs(c, t, h, spec, L, grid, lam)
        t = t0 + (i + 1) * dt if i < k else t_final
        if not np.all(np.isfinite(c)) or np.max(np.abs(c)) > 1e150:
            blow = t
            break
        times.append(t)
        record(c, t)
        if record_every and (i + 1) % record_every == 0 and i + 1 < len(steps):
            snaps.append(SpectralField(u0.dim, L, c))
    if blow is None:
        snaps.append(SpectralField(u0.dim, L, c))
    diag = {k2: np.array(v) for k2, v in diag.items()}
    return Trajectory(spec, np.array(times), snaps, diag, blow)


def solve_final(u0, spec, t_final, dt, grid=None, t0=0.0):
    """End state only, without diagnostics."""
    tr = solve(u0, spec, t_final, dt, grid, t0, diagnostics=False)
    if tr.blew_up:
        raise BlowUpError(f"solution blew up at t = {tr.blowup_time}")
    return tr.final


def reversal_defect(u0, spec, t_final, dt, grid=None):
    """||S(-T) S(T) u0 - u0||_2 together with the one-way error against a dt/8 reference."""
    fwd = solve_final(u0, spec, t_final, dt, grid)
    back = solve_final(fwd, spec, 0.0, -dt, grid, t0=t_final)
    ref = solve_final(u0, spec, t_final, dt / 8, grid)
    return (float(np.linalg.norm(back.coeffs - u0.coeffs)),
            float(np.linalg.norm(fwd.coeffs - ref.coeffs)))


def convergence_study(u0, spec, t_final, dts, grid=None, ref_factor=8):
    """Terminal L^2 errors for each dt against a run at min(dts)/ref_factor, plus the fitted order."""
    from .stats import loglog_slope

    dts = np.asarray(dts, float)
    ref = solve_final(u0, spec, t_final, dts.min() / ref_factor, grid)
    errs = np.array([np.linalg.norm(solve_final(u0, spec, t_final, h, grid).coeffs - ref.coeffs)
                     for h in dts])
    return errs, loglog_slope(dts, errs).slope


# ---------------------------------------------------------------------------
# Picard iteration of the Duhamel map
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class PicardReport:
    times: np.ndarray
    iterate_norms: np.ndarray
    diff_norms: np.ndarray
    ratios: np.ndarray
    limit: SpectralField
    proxy_components: list = field(default_factory=list)

    @property
    def contracting(self):
        return bool(np.all(self.ratios < 1))

    @property
    def diverged(self):
        r = self.ratios
        return len(r) >= 2 and bool(np.all(r[-2:] > 1))


def _proxy_norm(a, times, lam, dim, L, s, mixed_grids):
    """max of L^inf_T H^s and the mixed L^q_T W^{s,r} norms of e^{-itH} a(t)."""
    comps = {"linf_hs": float(np.max(np.sqrt(np.sum(lam ** s * np.abs(a) ** 2, axis=1))))}
    if np.all(a == 0):
        for q, r, _ in mixed_grids:
            comps[f"L{q:g}W{r:g}"] = 0.0
        return 0.0, comps
    phys = a * np.exp(-1j * np.outer(times, lam)) * lam ** (s / 2)
    for q, r, grid in mixed_grids:
        vals = synthesize(phys, dim, L, grid)
        ax = tuple(range(1, dim + 1))
        sp = np.tensordot(np.abs(vals) ** r, grid.tensor_lifted(), axes=(ax, tuple(range(dim)))) ** (1 / r)
        comps[f"L{q:g}W{r:g}"] = float(integrate.trapezoid(sp ** q, times) ** (1 / q))
    return max(comps.values()), comps


def mixed_pairs(dim):
    """Admissible pairs monitored by the contraction proxy."""
    return [(4.0, 4.0)] + ([(2.0, 6.0)] if dim == 3 else [])


def picard_iterate(u0, spec, T, iterations, s=0.0, grid=None, dt_quad=None):
    """Iterate the Duhamel map in the interaction picture a(t) = e^{itH} u(t).

    a_{k+1}(t) = u0 - i sign int_0^t w(tau) e^{i tau H} P[|u_k|^(p-1) u_k](tau) d tau,
    with the integral accumulated by the trapezoid rule on a uniform grid of
    step ``dt_quad``. Reported norms refer to the fluctuation v_k = a_k - u0
    mapped back to the physical picture.
    """
    dt_quad = T / 50 if dt_quad is None else dt_quad
    n = max(2, int(round(T / dt_quad)))
    times = np.linspace(0.0, T, n + 1)
    dim, L = u0.dim, u0.max_level
    lam = eigenvalues(dim, L)
    grid = nonlinear_grid(spec, L) if grid is None else grid
    _check_grid(spec, L, grid)
    mixed = [(q, r, norm_grid(dim, L, r)) for q, r in mixed_pairs(dim)]
    w = spec.weight(times)
    back = np.exp(1j * np.outer(times, lam))
    a = np.broadcast_to(u0.coeffs, (n + 1, len(lam))).copy()
    v_prev = np.zeros_like(a)
    norms, diffs, comps = [], [], []
    for _ in range(iterations):
        u = a * np.conj(back)
        vals = synthesize(u, dim, L, grid)
        nl = analyze(np.abs(vals) ** (spec.p - 1) * vals, dim, L, grid)
        integrand = (-1j * spec.sign * spec.coupling) * w[:, None] * back * nl
        cum = np.zeros_like(integrand)
        cum[1:] = np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(times)[:, None], axis=0)
        v = cum
        a = u0.coeffs[None, :] + v
        nv, _ = _proxy_norm(v, times, lam, dim, L, s, mixed)
        nd, cd = _proxy_norm(v - v_prev, times, lam, dim, L, s, mixed)
        norms.append(nv)
        diffs.append(nd)
        comps.append(cd)
        v_prev = v
    diffs = np.array(diffs)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(diffs[:-1] > 0, diffs[1:] / diffs[:-1], 0.0)
    limit = SpectralField(dim, L, a[-1] * np.exp(-1j * T * lam))
    return PicardReport(times, np.array(norms), diffs, ratios, limit, comps)


# ---------------------------------------------------------------------------
# Smoothing of the fluctuation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FluctuationGain:
    levels: tuple
    s_probe: tuple
    full_norms: np.ndarray     # (levels, probes)
    fluct_norms: np.ndarray    # (levels, probes)
    gain: float | None


def fluctuation_norms(u0, spec, T, dt, s_probe, grid=None):
    """H^sigma norms of u(T) and of u(T) - e^{-iTH} u0 for sigma in ``s_probe``."""
    uT = solve_final(u0, spec, T, dt, grid)
    lam = u0.eigenvalues
    fl = uT.coeffs - u0.coeffs * np.exp(-1j * T * lam)
    return (np.array([_hs(uT.coeffs, lam, s) for s in s_probe]),
            np.array([_hs(fl, lam, s) for s in s_probe]))


def fluctuation_gain(fields: Sequence[SpectralField] | Callable[[int], SpectralField], spec, T,
                     s_probe, dt, levels=None, growth_tol=0.1):
    """Level-cap refinement study of the fluctuation's regularity.

    ``fields`` is the same random sample at increasing level caps (or a
    callable returning it for a level). The gain is the largest probe sigma
    at which the fluctuation norm changes by less than ``growth_tol`` between
    the coarsest and finest cap while the full solution's norm grows by more.
    """
    if callable(fields):
        fields = [fields(L) for L in levels]
    fields = list(fields)
    full, fluct = zip(*(fluctuation_norms(u, spec, T, dt, s_probe) for u in fields))
    full, fluct = np.array(full), np.array(fluct)
    gain = None
    for i, s in enumerate(s_probe):
        f_ok = abs(fluct[-1, i] - fluct[0, i]) <= growth_tol * max(fluct[0, i], 1e-300)
        u_grows = full[-1, i] > (1 + growth_tol) * full[0, i]
        if f_ok and u_grows:
            gain = s if gain is None else max(gain, s)
    return FluctuationGain(tuple(u.max_level for u in fields), tuple(s_probe), full, fluct, gain)

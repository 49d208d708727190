"""High-low decomposition experiment on random data.

The datum u0 is split with a smooth spectral cutoff chi(H/N^2) into a low
part, evolved by the nonlinear equation, and a high part, evolved linearly.
Time is cut into windows of length T(N); on each window the nonlinear
remainder w^j = u - e^{-itH} u0^N - u^j is measured and folded into the next
low datum. Trials are propagated together as a batch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hermite import SpectralField, eigenvalues, synthesize
from .nls import EquationSpec, _strang_coeffs, nonlinear_grid
from .sampling import CoefficientProfile, sample_batch
from .stats import linear_fit


# ---------------------------------------------------------------------------
# Cutoff and exponents
# ---------------------------------------------------------------------------

def smoothstep(x):
    """Quintic 6x^5 - 15x^4 + 10x^3 on [0, 1], clamped outside."""
    x = np.clip(x, 0.0, 1.0)
    return x ** 3 * (x * (6 * x - 15) + 10)


def chi(tau):
    """1 on |tau| <= 1/2, 0 on |tau| >= 1, quintic transition in between."""
    return 1.0 - smoothstep(2.0 * np.abs(np.asarray(tau, float)) - 1.0)


@dataclass(frozen=True)
class ProjectorSpec:
    N: float
    cutoff: object = chi

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")

    def multiplier(self, lam):
        return self.cutoff(np.asarray(lam, float) / self.N ** 2)


def _split_exact(c, m):
    """low = m c, high = (1 - m) c with low + high == c bit for bit.

    The larger of the two parts is obtained by subtraction from c; by
    Sterbenz's lemma that subtraction is exact, and so is the sum.
    """
    c = np.asarray(c, complex)
    m = np.broadcast_to(m, c.shape)
    big = m >= 0.5
    low = np.where(big, c * m, 0)
    high = np.where(big, 0, c * (1 - m))
    low = np.where(big, low, c - high)
    high = np.where(big, c - low, high)
    return low, high


def smooth_project(u, N, cutoff=chi):
    """(S_N u, (1 - S_N) u) with S_N = chi(H / N^2) acting on coefficients."""
    m = ProjectorSpec(N, cutoff).multiplier(u.eigenvalues)
    low, high = _split_exact(u.coeffs, m)
    return u.with_coeffs(low), u.with_coeffs(high)


def hf_constants(s):
    """Constants in ||S_N u||_{H^1} <= a N^(1-s) ||u||_{H^s}, ||(1-S_N) u||_{L^2} <= b N^(-s) ||u||_{H^s}.

    a = 1 holds for any cutoff supported in [0, 1]. For the high part b = 1 is
    impossible for a smooth cutoff (1 - chi is close to 1 just below tau = 1,
    where tau^s < 1); the sharp bound over tau in [1/2, 1] is b = 2^(s/2).
    """
    return 1.0, 2.0 ** (s / 2)


@dataclass(frozen=True)
class HFCheck:
    low_ratio: float
    high_ratio: float
    low_ok: bool
    high_ok: bool
    high_ok_sharp: bool


def hf_inequalities(u, N, s, cutoff=chi):
    """Ratios of the two split-norm bounds (<= 1 means the unit-constant bound holds)."""
    low, high = smooth_project(u, N, cutoff)
    lam = u.eigenvalues
    hs = math.sqrt(np.sum(lam ** s * np.abs(u.coeffs) ** 2))
    if hs == 0:
        return HFCheck(0.0, 0.0, True, True, True)
    h1_low = math.sqrt(np.sum(lam * np.abs(low.coeffs) ** 2))
    l2_high = float(np.linalg.norm(high.coeffs))
    a = h1_low / (N ** (1 - s) * hs)
    b = l2_high / (N ** (-s) * hs)
    return HFCheck(a, b, a <= 1.0, b <= 1.0, b <= hf_constants(s)[1] * (1 + 1e-12))


def window_length(N, s, d, eps=0.05):
    """T = N^(-4(1-s)-eps) for d = 3 and N^(-2(1-s)-eps) for d = 2."""
    if not 0 < s < 1:
        raise ValueError("s must lie in (0, 1)")
    if d == 3:
        return float(N) ** (-4 * (1 - s) - eps)
    if d == 2:
        return float(N) ** (-2 * (1 - s) - eps)
    raise ValueError("d must be 2 or 3")


def growth_exponent(s, d):
    """Energy growth exponent c_s."""
    if d == 3:
        if not 1 / 6 < s < 1:
            raise ValueError("d = 3 needs s in (1/6, 1)")
        return 2 * (1 - s) / (6 * s - 1) if s <= 0.5 else 2 * (1 - s) / (2 * s + 1)
    if d == 2:
        if not 0 < s < 1:
            raise ValueError("d = 2 needs s in (0, 1)")
        return (1 - s) / s
    raise ValueError("d must be 2 or 3")


def growth_exponent_branches(s):
    """Both d = 3 branches evaluated at s (for continuity checks)."""
    return 2 * (1 - s) / (6 * s - 1), 2 * (1 - s) / (2 * s + 1)


def fluctuation_exponent(s):
    """beta(s) for d = 3: -5/2 for s <= 1/2 and 2s - 7/2 for s >= 1/2."""
    if not 0 < s < 1:
        raise ValueError("s must lie in (0, 1)")
    return -2.5 if s <= 0.5 else 2 * s - 3.5


# ---------------------------------------------------------------------------
# Batched propagation
# ---------------------------------------------------------------------------

def _propagate(c, spec, t0, t1, dt, L, grid, lam):
    n = max(1, int(math.ceil(abs(t1 - t0) / dt - 1e-9)))
    h = (t1 - t0) / n
    for i in range(n):
        c = _strang_coeffs(c, t0 + i * h, h, spec, L, grid, lam)
    return c


def _energies(c, spec, L, grid, lam):
    kin = np.sum(lam * np.abs(c) ** 2, axis=-1)
    if spec.coupling == 0:
        return kin
    vals = synthesize(c, spec.dim, L, grid)
    ax = tuple(range(vals.ndim - spec.dim, vals.ndim))
    pot = np.tensordot(np.abs(vals) ** (spec.p + 1), grid.tensor_lifted(),
                       axes=(ax, tuple(range(spec.dim))))
    return kin + spec.sign * spec.coupling * 2.0 / (spec.p + 1) * pot


def _norms(c, lam, s):
    return np.sqrt(np.sum(lam ** s * np.abs(c) ** 2, axis=-1))


# ---------------------------------------------------------------------------
# Window ledger
# ---------------------------------------------------------------------------

LEDGER_COLUMNS = ("j", "t_start", "T", "E_low", "mass_low", "w_h1", "w_l2", "increment", "bound_ok")


@dataclass(eq=False)
class WindowLedger:
    """Per-window records; array fields have shape (windows, trials)."""

    N: float
    s: float
    dim: int
    T: float
    t_start: np.ndarray
    E_low: np.ndarray
    mass_low: np.ndarray
    w_h1: np.ndarray
    w_l2: np.ndarray
    increment: np.ndarray
    bound_ok: np.ndarray
    reconstruction_defect: float
    final_full: np.ndarray = field(repr=False, default=None)

    @property
    def n_windows(self):
        return len(self.t_start)

    @property
    def median_increment(self):
        """Median over trials of the mean per-window increment."""
        return float(np.median(self.increment.mean(axis=0)))

    def rows(self, trial=0):
        return [(j, float(self.t_start[j]), float(self.T), float(self.E_low[j, trial]),
                 float(self.mass_low[j, trial]), float(self.w_h1[j, trial]),
                 float(self.w_l2[j, trial]), float(self.increment[j, trial]),
                 bool(self.bound_ok[j, trial]))
                for j in range(self.n_windows)]


def bourgain_run(gamma, law, seed, s, d, N, A, dt, spec=None, eps=0.05, trials=1,
                 cutoff=chi):
    """Window-by-window high-low run for a batch of random data.

    Low equation: full nonlinear equation from the accumulated low datum.
    Full equation: one continuous solve of the untruncated datum. The
    remainder w^j is their difference minus the linear evolution of the
    high part, so u = e^{-itH} u0^N + u^j + w^j holds at every window end.
    """
    base = gamma.base if isinstance(gamma, CoefficientProfile) else gamma
    if base.dim != d:
        raise ValueError("profile dimension does not match d")
    spec = EquationSpec.cubic(d) if spec is None else spec
    L = base.max_level
    lam = eigenvalues(d, L)
    grid = nonlinear_grid(spec, L)
    u0 = sample_batch(base, law, seed, trials).coeffs
    m = ProjectorSpec(N, cutoff).multiplier(lam)
    low0, high0 = _split_exact(u0, m)

    T = window_length(N, s, d, eps)
    n_win = int(math.floor(A / T + 1e-12))
    if n_win < 1:
        raise ValueError(f"horizon A = {A} is shorter than one window T = {T:.3g}")
    e_cap = 4 * N ** (2 * (1 - s + eps))
    m_cap = 2 * N ** eps

    full = u0.copy()
    datum = low0
    rows = {k: [] for k in ("E_low", "mass_low", "w_h1", "w_l2", "increment", "bound_ok")}
    starts = []
    defect = 0.0
    for j in range(n_win):
        t0, t1 = j * T, (j + 1) * T
        starts.append(t0)
        u_low = _propagate(datum, spec, t0, t1, dt, L, grid, lam)
        full = _propagate(full, spec, t0, t1, dt, L, grid, lam)
        lin_high = high0 * np.exp(-1j * t1 * lam)
        w = full - lin_high - u_low
        defect = max(defect, float(np.max(np.abs(lin_high + u_low + w - full))))
        e_low = _energies(u_low, spec, L, grid, lam)
        e_sum = _energies(u_low + w, spec, L, grid, lam)
        mass_low = _norms(u_low, lam, 0.0)
        rows["E_low"].append(e_low)
        rows["mass_low"].append(mass_low)
        rows["w_h1"].append(_norms(w, lam, 1.0))
        rows["w_l2"].append(_norms(w, lam, 0.0))
        rows["increment"].append(np.abs(e_sum - e_low))
        rows["bound_ok"].append((e_low <= e_cap) & (mass_low <= m_cap))
        datum = u_low + w
    arr = {k: np.array(v).reshape(n_win, trials) for k, v in rows.items()}
    return WindowLedger(N, s, d, T, np.array(starts), arr["E_low"], arr["mass_low"], arr["w_h1"],
                        arr["w_l2"], arr["increment"], arr["bound_ok"], defect, full)


# ---------------------------------------------------------------------------
# Growth of the nonlinear part
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GrowthFit:
    horizons: tuple
    max_energy: np.ndarray   # (horizons, trials)
    exponents: np.ndarray    # per trial
    median_exponent: float
    c_s: float | None
    envelope_ok: bool | None


def growth_fit(gamma, law, seed, s, d, horizons, dt, spec=None, trials=1, sample_every=None):
    """Fit max_{t <= A} E(w(t)), w = u - e^{-itH} u0, against the horizon A (log-log).

    One solve to the largest horizon serves all smaller ones. E is the energy
    functional of the equation evaluated on w.
    """
    horizons = tuple(sorted(float(a) for a in horizons))
    if len(horizons) < 3:
        raise ValueError("growth_fit needs at least three horizons")
    base = gamma.base if isinstance(gamma, CoefficientProfile) else gamma
    spec = EquationSpec.cubic(d) if spec is None else spec
    L = base.max_level
    lam = eigenvalues(d, L)
    grid = nonlinear_grid(spec, L)
    u0 = sample_batch(base, law, seed, trials).coeffs
    every = sample_every or max(dt, horizons[0] / 20)
    n_chunks = int(math.ceil(horizons[-1] / every - 1e-9))
    c = u0.copy()
    t = 0.0
    running = np.zeros(trials)
    best = np.zeros((len(horizons), trials))
    k = 0
    for i in range(n_chunks):
        t1 = min(horizons[-1], (i + 1) * every)
        c = _propagate(c, spec, t, t1, dt, L, grid, lam)
        t = t1
        w = c - u0 * np.exp(-1j * t * lam)
        running = np.maximum(running, _energies(w, spec, L, grid, lam))
        while k < len(horizons) and t >= horizons[k] - 1e-12:
            best[k] = running
            k += 1
    # energies at round-off level (w is then zero up to rounding) carry no exponent
    floor = 1e-20 * max(1.0, float(np.max(_energies(u0, spec, L, grid, lam))))
    exps = np.zeros(trials)
    for tr in range(trials):
        y = best[:, tr]
        if np.all(y <= floor):
            exps[tr] = 0.0
        else:
            ok = y > floor
            exps[tr] = linear_fit(np.log(np.array(horizons)[ok]), np.log(y[ok])).slope
    try:
        cs = growth_exponent(s, d)
    except ValueError:
        cs = None
    med = float(np.median(exps))
    return GrowthFit(horizons, best, exps, med, cs, None if cs is None else bool(med <= cs + 1))


def regularity_profile(d, max_level, s, amplitude=1.0, margin=0.05):
    """Cluster-flat profile sitting just inside H^s: b = (1 + s)/2 + margin."""
    return CoefficientProfile.cluster_flat(d, max_level, (1 + s) / 2 + margin, s, amplitude)

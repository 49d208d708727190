"""Monte-Carlo experiments around Khinchin and probabilistic Strichartz bounds.

Mixed norms ||e^{-itH} u||_{L^q_T W^{sigma, r}} are computed with a midpoint
rectangle rule in time and Gauss-Hermite quadrature (or grid maxima for
r = inf) in space. Everything here is batched over trials: a batch of
coefficient vectors is propagated to all time samples at once.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import norm as _normal

from .hermite import SpectralField, eigenvalues, norm_grid, synthesize
from .sampling import CoefficientProfile, law_draw_matrix, sample_batch
from .stats import linear_fit, wilson_interval

_CHUNK = 256


# ---------------------------------------------------------------------------
# Khinchin
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KhinchinEstimate:
    ratio: float
    se: float
    k: float
    trials: int


def khinchin_estimate(c, k, law, trials, seed=0, draws=None):
    """(E|sum g_n c_n|^k)^(1/k) / (sqrt(k) ||c||_2) with a delta-method standard error.

    ``draws`` may carry a precomputed (trials, len(c)) matrix so several k
    share one set of samples.
    """
    c = np.asarray(c)
    cnorm = float(np.linalg.norm(c))
    if k < 2:
        raise ValueError("moment order k must be >= 2")
    if cnorm == 0:
        raise ValueError("coefficient vector must be non-zero")
    g = law_draw_matrix(law, seed, trials, len(c)) if draws is None else draws
    s = np.abs(g @ c) ** k
    m = s.mean()
    se_m = s.std(ddof=1) / math.sqrt(len(s))
    ratio = m ** (1.0 / k) / (math.sqrt(k) * cnorm)
    return KhinchinEstimate(float(ratio), float(ratio * se_m / (k * m)), float(k), len(s))


def khinchin_ratio(c, k, law, trials, seed=0):
    return khinchin_estimate(c, k, law, trials, seed).ratio


def gaussian_khinchin_ratio(k):
    """Exact ratio for gaussian g: ((k-1)!!)^(1/k) / sqrt(k) for even k."""
    m = math.exp(math.lgamma((k + 1) / 2) + (k / 2) * math.log(2) - 0.5 * math.log(math.pi))
    return m ** (1.0 / k) / math.sqrt(k)


# ---------------------------------------------------------------------------
# Mixed norms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MixedNormSpec:
    """Parameters of ||e^{-i(t+tau)H} u||_{L^q([0,T]) W^{s+alpha, r}}.

    ``alpha`` defaults to d(1/2 - 1/r) for finite r and to 0 for r = inf.
    """

    q: float
    r: float
    s: float = 0.0
    alpha: float | None = None
    T: float = 1.0
    tau: float = 0.0
    n_time: int = 16

    def __post_init__(self):
        if not 1 <= self.q < math.inf:
            raise ValueError("q must lie in [1, inf)")
        if self.r < 2:
            raise ValueError("r must be >= 2")
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.n_time < 16:
            raise ValueError("at least 16 time samples are required")

    def gain(self, dim):
        if self.alpha is not None:
            if math.isinf(self.r):
                if self.alpha >= dim / 2:
                    raise ValueError("for r = inf the gain must be < d/2")
            elif abs(self.alpha - dim * (0.5 - 1.0 / self.r)) > 1e-12:
                raise ValueError("for finite r the gain is fixed to d(1/2 - 1/r)")
            return self.alpha
        return 0.0 if math.isinf(self.r) else dim * (0.5 - 1.0 / self.r)

    def times(self):
        dt = self.T / self.n_time
        return self.tau + (np.arange(self.n_time) + 0.5) * dt, dt

    def to_dict(self):
        d = asdict(self)
        d["r"] = "inf" if math.isinf(self.r) else self.r
        return d


def is_admissible(q, r, dim):
    """2/q + d/r = d/2 with 2 <= r."""
    inv_r = 0.0 if math.isinf(r) else 1.0 / r
    return abs(2.0 / q + dim * inv_r - dim / 2) < 1e-12


def _space_norms(values, r, grid, dim):
    axes = tuple(range(values.ndim - dim, values.ndim))
    a = np.abs(values)
    if math.isinf(r):
        return a.max(axis=axes)
    w = grid.tensor_lifted()
    return np.tensordot(a ** r, w, axes=(axes, tuple(range(dim)))) ** (1.0 / r)


def space_time_norms(coeffs, dim, max_level, sigma, r, times, grid=None):
    """||H^(sigma/2) e^{-itH} u||_{L^r} for a batch (B, M) at every time, shape (B, len(times))."""
    coeffs = np.atleast_2d(coeffs)
    grid = norm_grid(dim, max_level, r) if grid is None else grid
    if not math.isinf(r):
        grid.check_level(max_level)
    lam = eigenvalues(dim, max_level)
    prop = np.exp(-1j * np.outer(times, lam)) * lam ** (sigma / 2.0)
    out = np.empty((len(coeffs), len(times)))
    step = max(1, _CHUNK // max(1, len(times) // 16))
    for i in range(0, len(coeffs), step):
        block = coeffs[i:i + step, None, :] * prop[None]
        vals = synthesize(block, dim, max_level, grid)
        out[i:i + step] = _space_norms(vals, r, grid, dim)
    return out


def mixed_norm_batch(coeffs, dim, max_level, spec, grid=None):
    """Mixed norms for a batch of coefficient vectors, shape (B,)."""
    times, dt = spec.times()
    sigma = spec.s + spec.gain(dim)
    vals = space_time_norms(coeffs, dim, max_level, sigma, spec.r, times, grid)
    return (dt * np.sum(vals ** spec.q, axis=1)) ** (1.0 / spec.q)


def mixed_norm(u, spec, grid=None):
    return float(mixed_norm_batch(u.coeffs[None, :], u.dim, u.max_level, spec, grid)[0])


def mixed_norm_refinement(u, spec, grid=None):
    """Relative change of the mixed norm when the time samples are doubled."""
    a = mixed_norm(u, spec, grid)
    b = mixed_norm(u, replace(spec, n_time=2 * spec.n_time), grid)
    return abs(a - b) / b if b > 0 else 0.0


def strichartz_constant(fields, q, r, T, n_time=32):
    """max ||e^{-itH} u||_{L^q_T L^r} / ||u||_{L^2} over ``fields`` (s = alpha = 0)."""
    dt = T / n_time
    times = (np.arange(n_time) + 0.5) * dt
    ratios = []
    for u in fields:
        vals = space_time_norms(u.coeffs, u.dim, u.max_level, 0.0, r, times)
        nrm = (dt * np.sum(vals ** q)) ** (1.0 / q)
        ratios.append(nrm / np.linalg.norm(u.coeffs))
    return float(np.max(ratios))


# ---------------------------------------------------------------------------
# Tail curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TailCurve:
    K: np.ndarray
    counts: np.ndarray
    trials: int
    p_hat: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    slope: float | None
    slope_se: float | None
    intercept: float | None
    r2: float | None
    window: tuple | None
    seed: int | None = None
    spec: dict = field(default_factory=dict)

    def rows(self):
        return [(float(k), float(p), float(lo), float(hi))
                for k, p, lo, hi in zip(self.K, self.p_hat, self.ci_lo, self.ci_hi)]

    def summary(self):
        return {"slope": self.slope, "slope_se": self.slope_se, "r2": self.r2,
                "window": list(self.window) if self.window else None,
                "trials": self.trials, "seed": self.seed, "spec": self.spec}


def tail_from_values(values, K, seed=None, spec=None, alpha=0.05):
    """Empirical exceedance curve P(value > K) and its sub-Gaussian fit.

    The line log P = a + slope K^2 is fitted by weighted least squares over
    the K with 10/trials < P < 0.5, with weights n p / (1 - p), the inverse
    delta-method variance of log p.
    """
    values = np.sort(np.asarray(values, float))
    K = np.asarray(K, float)
    n = len(values)
    counts = n - np.searchsorted(values, K, side="right")
    p = counts / n
    lo, hi = wilson_interval(counts, n, alpha)
    win = (p > 10.0 / n) & (p < 0.5)
    slope = se = icpt = r2 = window = None
    if win.sum() >= 3:
        w = n * p[win] / (1 - p[win])
        fit = linear_fit(K[win] ** 2, np.log(p[win]), w)
        slope, se, icpt, r2 = fit.slope, fit.slope_se, fit.intercept, fit.r2
        window = (float(K[win].min()), float(K[win].max()))
    return TailCurve(K, counts, n, p, lo, hi, slope, se, icpt, r2, window, seed, spec or {})


def sample_mixed_norms(gamma, law, spec, trials, seed, grid=None):
    base = gamma.base if isinstance(gamma, CoefficientProfile) else gamma
    out = np.empty(trials)
    for i in range(0, trials, 2048):
        idx = range(i, min(trials, i + 2048))
        batch = sample_batch(base, law, seed, idx)
        out[i:i + len(idx)] = mixed_norm_batch(batch.coeffs, base.dim, base.max_level, spec, grid)
    return out


def default_k_grid(values, n=40):
    return np.linspace(0.0, float(np.max(values)), n)


def tail_curve(gamma, law, spec, K=None, trials=1000, seed=0, grid=None):
    """Exceedance probabilities of the mixed norm of random data."""
    if trials < 1:
        raise ValueError("trials must be positive")
    vals = sample_mixed_norms(gamma, law, spec, trials, seed, grid)
    K = default_k_grid(vals) if K is None else K
    return tail_from_values(vals, K, seed, spec.to_dict())


@dataclass(frozen=True, eq=False)
class ShiftReport:
    shifts: tuple
    curves: tuple
    disjoint: np.ndarray  # (pairs, K) band disjointness against the first shift
    z_pvalues: np.ndarray
    max_abs_diff: float

    @property
    def consistent(self):
        return not bool(np.any(self.disjoint))


def shift_invariance_check(gamma, law, spec, shifts, trials, seed=0, K=None,
                           independent=True, grid=None):
    """Compare tail curves of the mixed norm for several time shifts.

    With ``independent`` each shift uses its own seed stream (seed + i), so
    the two-proportion z-tests are valid; otherwise all curves share samples.
    """
    if len(shifts) < 2:
        raise ValueError("need at least two shifts")
    values = []
    for i, tau in enumerate(shifts):
        sd = seed + i if independent else seed
        values.append(sample_mixed_norms(gamma, law, replace(spec, tau=float(tau)), trials, sd, grid))
    K = default_k_grid(np.concatenate(values)) if K is None else np.asarray(K, float)
    curves = tuple(tail_from_values(v, K, seed, spec.to_dict()) for v in values)
    ref = curves[0]
    disjoint, pvals = [], []
    for c in curves[1:]:
        disjoint.append((c.ci_lo > ref.ci_hi) | (c.ci_hi < ref.ci_lo))
        pooled = (c.counts + ref.counts) / (2 * trials)
        sd = np.sqrt(np.maximum(pooled * (1 - pooled) * 2 / trials, 1e-300))
        z = np.where(pooled > 0, (c.p_hat - ref.p_hat) / sd, 0.0)
        z = np.where((pooled > 0) & (pooled < 1), z, 0.0)
        pvals.append(2 * _normal.sf(np.abs(z)))
    diffs = max(float(np.max(np.abs(np.sort(v) - np.sort(values[0])))) for v in values[1:])
    return ShiftReport(tuple(shifts), curves, np.array(disjoint), np.array(pvals), diffs)


# ---------------------------------------------------------------------------
# Event sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EventSetSpec:
    """One of the sets G_d(K), F_sigma(K), F~_0(K).

    ``sigma`` is only used for F_sigma. ``n_time`` time samples cover the
    set's time interval ([-2 pi, 2 pi] for G_d, [0, 2 pi] otherwise).
    """

    which: str
    K: float
    eps: float = 0.1
    sigma: float = 0.0
    n_time: int = 32

    def __post_init__(self):
        if self.which not in ("G_d", "F_sigma", "F0_tilde"):
            raise ValueError(f"unknown event set {self.which!r}")
        if not 0 < self.eps <= 0.25:
            raise ValueError("eps must lie in (0, 1/4]")


@dataclass(frozen=True)
class Membership:
    member: bool
    margins: dict
    values: dict


def _strichartz_term(u, deriv, t0, t1, eps, n_time):
    spec = MixedNormSpec(q=1.0 / eps, r=math.inf, s=deriv, alpha=0.0, T=t1 - t0, tau=t0,
                         n_time=n_time)
    return mixed_norm(u, spec)


def _holder_pairs(points, radius=1.0):
    tree = cKDTree(points)
    pairs = tree.query_pairs(radius, output_type="ndarray")
    return pairs


def holder_sup_batch(coeffs, dim, max_level, eps, times, grid=None):
    """sup over (t, x, y) with |x - y| <= 1 of |v(t,x) - v(t,y)| / |x - y|^(1-eps), v = e^{-itH}u."""
    coeffs = np.atleast_2d(coeffs)
    grid = norm_grid(dim, max_level, math.inf) if grid is None else grid
    pts = grid.tensor_nodes().reshape(-1, dim)
    pairs = _holder_pairs(pts)
    dist = np.linalg.norm(pts[pairs[:, 0]] - pts[pairs[:, 1]], axis=1)
    scale = dist ** (1.0 - eps)
    lam = eigenvalues(dim, max_level)
    prop = np.exp(-1j * np.outer(times, lam))
    out = np.zeros(len(coeffs))
    for i, c in enumerate(coeffs):
        vals = synthesize(c[None, :] * prop, dim, max_level, grid).reshape(len(times), -1)
        diff = np.abs(vals[:, pairs[:, 0]] - vals[:, pairs[:, 1]]) / scale
        out[i] = diff.max()
    return out


def event_membership(u, spec, grid=None):
    """Margins K - value for every constraint defining the event set."""
    d = u.dim
    vals = {}
    if spec.which == "G_d":
        vals["l2"] = float(np.linalg.norm(u.coeffs))
        vals["strichartz"] = _strichartz_term(u, d / 2 - spec.eps, -2 * math.pi, 2 * math.pi,
                                              spec.eps, spec.n_time)
    else:
        if d != 2:
            raise ValueError(f"{spec.which} is defined for d = 2")
        t0, t1 = 0.0, 2 * math.pi
        if spec.which == "F_sigma":
            lam = u.eigenvalues
            vals["h_sigma"] = float(np.sqrt(np.sum(lam ** spec.sigma * np.abs(u.coeffs) ** 2)))
            vals["strichartz"] = _strichartz_term(u, 1 + spec.sigma - spec.eps, t0, t1,
                                                  spec.eps, spec.n_time)
        else:
            vals["l2"] = float(np.linalg.norm(u.coeffs))
            vals["strichartz"] = _strichartz_term(u, 1 - spec.eps, t0, t1, spec.eps, spec.n_time)
            times = t0 + (np.arange(spec.n_time) + 0.5) * (t1 - t0) / spec.n_time
            vals["holder"] = float(holder_sup_batch(u.coeffs, d, u.max_level, spec.eps, times, grid)[0])
    margins = {k: spec.K - v for k, v in vals.items()}
    return Membership(all(m >= 0 for m in margins.values()), margins, vals)


def event_probability(gamma, law, spec, trials, seed=0):
    """Fraction of samples belonging to the event set."""
    base = gamma.base if isinstance(gamma, CoefficientProfile) else gamma
    batch = sample_batch(base, law, seed, trials)
    hits = sum(event_membership(f, spec).member for f in batch)
    return hits / trials


def holder_tail(gamma, law, eps, K=None, trials=1000, seed=0, n_time=16, grid=None):
    """Tail curve of the sampled Holder constant of the free evolution on [0, 2 pi]."""
    base = gamma.base if isinstance(gamma, CoefficientProfile) else gamma
    if base.dim != 2:
        raise ValueError("holder_tail is defined for d = 2")
    times = (np.arange(n_time) + 0.5) * 2 * math.pi / n_time
    batch = sample_batch(base, law, seed, trials)
    vals = holder_sup_batch(batch.coeffs, 2, base.max_level, eps, times, grid)
    K = default_k_grid(vals) if K is None else K
    return tail_from_values(vals, K, seed, {"eps": eps, "n_time": n_time})

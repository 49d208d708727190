"""Random initial data gamma^omega = sum_n c_n g_n(omega) phi_n.

Draws are counter based: the Philox key is (seed, trial) and the n-th
coefficient consumes the n-th 64-bit word of that stream. Any trial can
therefore be regenerated on its own, in any order or on any worker, and a
field sampled at level cap L is a prefix of the same field at a larger cap.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import special, stats

from .hermite import (SpectralField, eigenvalues, level_cluster, mode_levels,
                      n_modes, shell_size, sobolev_norm)

_U64 = np.uint64


class RandomLaw(str, Enum):
    """Unit-variance, centred laws with sub-Gaussian moment generating function."""

    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"
    UNIFORM = "uniform"

    def exact_mgf(self, t):
        t = np.asarray(t, float)
        if self is RandomLaw.GAUSSIAN:
            return np.exp(t ** 2 / 2)
        if self is RandomLaw.RADEMACHER:
            return np.cosh(t)
        a = np.sqrt(3.0) * t
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(a == 0, 1.0, np.sinh(a) / np.where(a == 0, 1.0, a))

    @property
    def satisfies_support_condition(self):
        """Whether every open interval around 0 has positive mass."""
        return self is not RandomLaw.RADEMACHER


def _as_law(law):
    return law if isinstance(law, RandomLaw) else RandomLaw(str(law).lower())


# ---------------------------------------------------------------------------
# Counter-based draws
# ---------------------------------------------------------------------------

def _raw_words(seed, trial, count):
    bitgen = np.random.Philox(key=np.array([seed, trial], dtype=_U64))
    return bitgen.random_raw(count).astype(_U64)


def _uniform_open(words):
    """Map 64-bit words to (0, 1) using the top 53 bits, midpoint offset."""
    return ((words >> _U64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def law_draws(law, seed, trial, count):
    """First ``count`` draws g_0, g_1, ... of ``law`` for (seed, trial)."""
    law = _as_law(law)
    words = _raw_words(int(seed) % 2 ** 64, int(trial) % 2 ** 64, count)
    if law is RandomLaw.RADEMACHER:
        return np.where(words >> _U64(63), 1.0, -1.0)
    u = _uniform_open(words)
    if law is RandomLaw.GAUSSIAN:
        return special.ndtri(u)
    return np.sqrt(3.0) * (2.0 * u - 1.0)


def law_draw_matrix(law, seed, trials, count):
    """Draws for a range or list of trial indices, shape (len(trials), count)."""
    trials = range(trials) if isinstance(trials, (int, np.integer)) else trials
    out = np.empty((len(trials), count))
    for i, t in enumerate(trials):
        out[i] = law_draws(law, seed, t, count)
    return out


# ---------------------------------------------------------------------------
# Coefficient profiles
# ---------------------------------------------------------------------------

def squeezing_constant_of(coeffs, dim, max_level):
    """Smallest C with max_{k in I(j)} |c_k|^2 <= C / #I(j) sum_{I(j)} |c_n|^2 for all j.

    Empty (all zero) clusters contribute 1.
    """
    mass = np.abs(np.asarray(coeffs)) ** 2
    lev = mode_levels(dim, max_level)
    tot = np.bincount(lev, weights=mass, minlength=max_level + 1)
    peak = np.zeros(max_level + 1)
    np.maximum.at(peak, lev, mass)
    sizes = np.array([shell_size(dim, n) for n in range(max_level + 1)], float)
    ratio = np.ones(max_level + 1)
    nz = tot > 0
    ratio[nz] = peak[nz] * sizes[nz] / tot[nz]
    return float(max(1.0, ratio.max())) if nz.any() else 1.0


@dataclass(frozen=True, eq=False)
class CoefficientProfile:
    """Deterministic coefficients gamma with a regularity tag ``s``."""

    base: SpectralField
    s: float = 0.0
    kind: str = "explicit"

    @property
    def dim(self):
        return self.base.dim

    @property
    def max_level(self):
        return self.base.max_level

    @property
    def squeezing(self):
        return squeezing_constant_of(self.base.coeffs, self.dim, self.max_level)

    def norm(self, s=None):
        return sobolev_norm(self.base, self.s if s is None else s)

    def scaled(self, factor):
        return CoefficientProfile(self.base * factor, self.s, self.kind)

    @classmethod
    def power(cls, dim, max_level, a, s=0.0):
        """c_n = lambda_n^(-a) on every mode."""
        c = eigenvalues(dim, max_level) ** (-float(a))
        return cls(SpectralField(dim, max_level, c), s, "power")

    @classmethod
    def cluster_flat(cls, dim, max_level, b, s=0.0, amplitude=1.0):
        """Equal coefficients inside each cluster, cluster l^2 mass j^(-2b).

        Every mode of I(j) carries amplitude * j^(-b) / sqrt(#I(j)).
        """
        lev = mode_levels(dim, max_level)
        j = np.array([level_cluster(n, dim) for n in range(max_level + 1)], float)
        sizes = np.array([shell_size(dim, n) for n in range(max_level + 1)], float)
        per_level = amplitude * j ** (-float(b)) / np.sqrt(sizes)
        return cls(SpectralField(dim, max_level, per_level[lev]), s, "cluster-flat")

    @classmethod
    def explicit(cls, dim, max_level, coeffs, s=0.0):
        return cls(SpectralField(dim, max_level, np.asarray(coeffs, complex)), s, "explicit")

    @classmethod
    def from_spec(cls, spec):
        """Build from a dict or JSON text.

        Keys: dim, s, max_level, profile ("power" | "cluster-flat" | list of
        coefficients, each a number or a [re, im] pair), plus ``a`` for power
        profiles, ``b`` (and optional ``amplitude``) for cluster-flat ones.
        """
        spec = json.loads(spec) if isinstance(spec, str) else dict(spec)
        dim = int(spec["dim"])
        s = float(spec.get("s", 0.0))
        prof = spec["profile"]
        if isinstance(prof, list):
            c = np.array([complex(*v) if isinstance(v, (list, tuple)) else complex(v) for v in prof])
            level = spec.get("max_level")
            if level is None:
                level = 0
                while n_modes(dim, level) < len(c):
                    level += 1
            full = np.zeros(n_modes(dim, int(level)), complex)
            full[:len(c)] = c
            return cls.explicit(dim, int(level), full, s)
        level = int(spec["max_level"])
        if prof == "power":
            return cls.power(dim, level, float(spec["a"]), s)
        if prof == "cluster-flat":
            return cls.cluster_flat(dim, level, float(spec["b"]), s, float(spec.get("amplitude", 1.0)))
        raise ValueError(f"unknown profile kind {prof!r}")


def squeezing_constant(gamma):
    """Squeezing constant of a profile or a bare SpectralField."""
    if isinstance(gamma, CoefficientProfile):
        return gamma.squeezing
    return squeezing_constant_of(gamma.coeffs, gamma.dim, gamma.max_level)


def cluster_flat_in_space(b, s):
    """Whether the cluster-flat profile with exponent b lies in H^s (2b - s > 1)."""
    return 2 * b - s > 1


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def _base(gamma):
    return gamma.base if isinstance(gamma, CoefficientProfile) else gamma


def sample(gamma, law, seed, trial):
    """One realisation sum c_n g_n phi_n as a SpectralField."""
    base = _base(gamma)
    g = law_draws(law, seed, trial, len(base.coeffs))
    return base.with_coeffs(base.coeffs * g)


@dataclass(frozen=True, eq=False)
class SampleBatch:
    seed: int
    trials: tuple
    dim: int
    max_level: int
    coeffs: np.ndarray  # (len(trials), n_modes)

    def __len__(self):
        return len(self.trials)

    def __iter__(self):
        for row in self.coeffs:
            yield SpectralField(self.dim, self.max_level, row)

    def field(self, i):
        return SpectralField(self.dim, self.max_level, self.coeffs[i])


def sample_batch(gamma, law, seed, trials):
    """Samples for ``trials`` (a count or an iterable of trial indices)."""
    base = _base(gamma)
    idx = tuple(range(trials)) if isinstance(trials, (int, np.integer)) else tuple(trials)
    g = law_draw_matrix(law, seed, idx, len(base.coeffs))
    return SampleBatch(int(seed), idx, base.dim, base.max_level, g * base.coeffs[None, :])


# ---------------------------------------------------------------------------
# Moment generating function
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MGFReport:
    law: RandomLaw
    t: np.ndarray
    empirical: np.ndarray
    exact: np.ndarray
    fitted_c: float
    exact_c: float


def mgf_check(law, t=None, trials=100_000, seed=0):
    """Monte-Carlo E exp(t g) and the smallest c with the curve under exp(c t^2).

    The estimator averages exp(t g) and exp(-t g), which is unbiased for the
    symmetric laws used here and has smaller variance. The default t grid
    stops at |t| = 2: beyond it the heavy right tail of exp(t g) makes plain
    Monte-Carlo unreliable at 1e5 draws.
    """
    law = _as_law(law)
    t = np.linspace(-2.0, 2.0, 41) if t is None else np.asarray(t, float)
    if np.any(np.abs(t) > 5):
        raise ValueError("mgf_check expects |t| <= 5")
    g = law_draws(law, seed, 0, trials)
    emp = np.array([np.mean(np.cosh(tt * g)) if tt != 0 else 1.0 for tt in t])
    exact = law.exact_mgf(t)
    nz = t != 0
    fitted = float(np.max(np.log(emp[nz]) / t[nz] ** 2)) if nz.any() else 0.0
    exact_c = float(np.max(np.log(exact[nz]) / t[nz] ** 2)) if nz.any() else 0.0
    return MGFReport(law, t, emp, exact, fitted, exact_c)


def ks_pvalue(law, seed=0, draws=100_000):
    """Kolmogorov-Smirnov p-value of the coordinate draws against the law."""
    law = _as_law(law)
    g = law_draws(law, seed, 0, draws)
    if law is RandomLaw.GAUSSIAN:
        return float(stats.kstest(g, "norm").pvalue)
    if law is RandomLaw.UNIFORM:
        return float(stats.kstest(g, "uniform", args=(-np.sqrt(3), 2 * np.sqrt(3))).pvalue)
    raise ValueError("KS test needs a continuous law")

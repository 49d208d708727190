"""Fast invariant suite used by the ``selftest`` subcommand."""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from . import globalize, hermite, lens, nls, sampling, spectral, strichartz


@dataclass(frozen=True)
class Check:
    name: str
    ok: bool
    detail: str


def _orthonormality():
    n, w, lifted = hermite.gauss_hermite(120)
    phi = hermite.hermite_functions(100, n)
    err = np.abs((phi * lifted) @ phi.T - np.eye(101)).max()
    return err < 1e-10, f"max |G - I| = {err:.2e}"


def _round_trip():
    rng = np.random.default_rng(0)
    L = 20
    c = rng.normal(size=hermite.n_modes(2, L)) + 1j * rng.normal(size=hermite.n_modes(2, L))
    u = hermite.SpectralField(2, L, c)
    g = hermite.grid_for(2, L)
    back = hermite.forward_transform(hermite.inverse_transform(u, g), g, L)
    err = np.linalg.norm(back.coeffs - c) / np.linalg.norm(c)
    return err < 1e-10, f"relative error {err:.2e}"


def _clusters():
    for d in (2, 3):
        for j in range(1, 51):
            count = sum(1 for ell in product(range(j + 1), repeat=d)
                        if 2 * j <= 2 * sum(ell) + d < 2 * j + 2)
            if count != hermite.cluster_cardinality(j, d):
                return False, f"mismatch at d={d}, j={j}"
    return True, "j <= 50, d in {2, 3}"


def _spectral_values():
    a = spectral.spectral_diag(2.0, np.zeros(2))
    b = spectral.spectral_diag(4.0, np.zeros(2))
    tr = spectral.trace_integral(20.0, 2)
    count = sum(n + 1 for n in range(10))  # levels 2n + 2 <= 20
    ok = abs(a - 1 / math.pi) < 1e-14 and abs(b - 1 / math.pi) < 1e-14 and abs(tr - count) < 1e-8
    return ok, f"pi(2;0)={a:.6f}, pi(4;0)={b:.6f}, trace(20)={tr:.10f}"


def _squeezing():
    c = np.zeros(hermite.n_modes(2, 3))
    c[hermite.mode_index((1, 0))] = 1.0
    C = sampling.squeezing_constant_of(c, 2, 3)
    return abs(C - 2) < 1e-14, f"C = {C}"


def _determinism():
    g = sampling.CoefficientProfile.cluster_flat(2, 8, 1.0)
    a = sampling.sample(g, "gaussian", 7, 3).coeffs
    b = sampling.sample(g, "gaussian", 7, 3).coeffs
    return bool(np.array_equal(a, b)), "bit-identical resample"


def _khinchin_single():
    c = np.zeros(5)
    c[2] = 1.7
    r = strichartz.khinchin_ratio(c, 4, "rademacher", 200, seed=1)
    return abs(r - 0.5) < 1e-12, f"ratio {r}"


def _mixed_single_mode():
    u = hermite.SpectralField.unit((1, 2), 5)
    spec = strichartz.MixedNormSpec(4.0, 4.0, 0.0, T=0.7)
    a = strichartz.mixed_norm(u, spec)
    b = 0.7 ** 0.25 * hermite.wsp_norm(u, 0.5, 4.0, hermite.norm_grid(2, 5, 4))
    return abs(a - b) < 1e-10, f"|diff| = {abs(a - b):.1e}"


def _linear_limit():
    rng = np.random.default_rng(1)
    c = rng.normal(size=hermite.n_modes(2, 8)) * 0.3
    u = hermite.SpectralField(2, 8, c)
    spec = nls.EquationSpec.cubic(2, coupling=0.0)
    v = nls.solve_final(u, spec, 0.3, 0.01)
    err = np.abs(v.coeffs - hermite.linear_propagate(u, 0.3).coeffs).max()
    return err < 1e-12, f"max error {err:.1e}"


def _mass():
    c = np.zeros(hermite.n_modes(2, 14), complex)
    c[:3] = [0.8, 0.3j, 0.2]
    tr = nls.solve(hermite.SpectralField(2, 14, c), nls.EquationSpec.cubic(2), 0.2, 1e-3)
    d = tr.drift("mass")
    return d < 1e-8, f"relative mass drift {d:.1e}"


def _lens_gaussian():
    g = lens.FreeGrid(2, 16.0, 128)
    t = 0.5
    s = lens.lens_time(t)
    u = hermite.SpectralField.unit((0, 0), 4, value=np.exp(-2j * s))
    err = lens.lens_apply(u, t, g).distance(lens.free_gaussian(g, t))
    ts = np.linspace(-1e3, 1e3, 101)
    rt = np.abs(lens.lens_time_inverse(lens.lens_time(ts)) - ts).max() / 1e3
    return err < 1e-6 and rt < 1e-12, f"gaussian error {err:.1e}, time round trip {rt:.1e}"


def _projector():
    rng = np.random.default_rng(2)
    u = hermite.SpectralField(2, 20, rng.normal(size=hermite.n_modes(2, 20)))
    lo, hi = globalize.smooth_project(u, 4.0)
    exact = np.array_equal(lo.coeffs + hi.coeffs, u.coeffs)
    a, b = globalize.growth_exponent_branches(0.5)
    beta_gap = abs(globalize.fluctuation_exponent(0.5) - globalize.fluctuation_exponent(0.5 + 1e-13))
    ok = exact and abs(a - b) < 1e-12 and beta_gap < 1e-11
    return ok, f"partition exact={exact}, c_s branch gap {abs(a - b):.1e}, beta gap {beta_gap:.1e}"


CHECKS = [
    ("basis orthonormality", _orthonormality),
    ("transform round trip", _round_trip),
    ("cluster cardinalities", _clusters),
    ("spectral function values", _spectral_values),
    ("squeezing constant", _squeezing),
    ("sampling determinism", _determinism),
    ("khinchin single mode", _khinchin_single),
    ("mixed norm single mode", _mixed_single_mode),
    ("linear limit of the solver", _linear_limit),
    ("mass conservation", _mass),
    ("lens transform gaussian", _lens_gaussian),
    ("high-low projector", _projector),
]


def run_selftest():
    out = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # report, never abort the suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(Check(name, bool(ok), detail))
    return out

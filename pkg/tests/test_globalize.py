import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hermite_nls import globalize as gl
from hermite_nls import hermite as hm
from hermite_nls import nls
from hermite_nls import sampling as sa


def random_field(rng, L=20, d=2):
    m = hm.n_modes(d, L)
    return hm.SpectralField(d, L, rng.normal(size=m) + 1j * rng.normal(size=m))


# -- cutoff and projector --------------------------------------------------------------

def test_cutoff_shape():
    assert gl.chi(0.0) == 1.0 and gl.chi(0.5) == 1.0
    assert gl.chi(1.0) == 0.0 and gl.chi(3.0) == 0.0
    tau = np.linspace(0, 1.2, 200)
    assert np.all(np.diff(gl.chi(tau)) <= 0)
    assert gl.chi(0.75) == pytest.approx(0.5)


def test_cutoff_is_c2():
    h = 1e-4
    for tau in (0.5, 1.0):
        left = (gl.chi(tau) - gl.chi(tau - h)) / h
        right = (gl.chi(tau + h) - gl.chi(tau)) / h
        assert abs(left) < 1e-6 and abs(right) < 1e-6


def test_large_N_is_identity():
    u = random_field(np.random.default_rng(0), 10)
    lam_max = u.eigenvalues.max()
    low, high = gl.smooth_project(u, math.sqrt(2 * lam_max))
    assert np.array_equal(low.coeffs, u.coeffs) and np.all(high.coeffs == 0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), N=st.floats(1.0, 12.0))
def test_partition_exact(seed, N):
    u = random_field(np.random.default_rng(seed), 12)
    low, high = gl.smooth_project(u, N)
    assert np.array_equal(low.coeffs + high.coeffs, u.coeffs)


def test_projector_norm_at_most_one():
    rng = np.random.default_rng(1)
    for _ in range(20):
        u = random_field(rng, 12)
        low, _ = gl.smooth_project(u, 3.0)
        for sigma in (0.0, 0.5, 1.0):
            assert hm.sobolev_norm(low, sigma) <= hm.sobolev_norm(u, sigma) * (1 + 1e-15)
    m = gl.ProjectorSpec(3.0).multiplier(np.linspace(0, 100, 1000))
    assert m.max() == 1.0


def test_projector_rejects_small_N():
    with pytest.raises(ValueError):
        gl.ProjectorSpec(0.5)


@pytest.mark.parametrize("s", [0.3, 0.5, 0.7])
def test_hf_bounds_on_random_fields(s):
    rng = np.random.default_rng(int(10 * s))
    for _ in range(200):
        u = random_field(rng, 16)
        N = float(rng.uniform(1.5, 6.0))
        chk = gl.hf_inequalities(u, N, s)
        assert chk.low_ok and chk.high_ok_sharp


def test_hf_high_bound_constant_is_sharp():
    # one mode just below N^2: 1 - chi is close to 1 there but (lambda / N^2)^s < 1
    s, N = 0.3, 8.0
    lam = N ** 2 - 2
    level = int((lam - 2) // 2)
    ell = (level, 0)
    u = hm.SpectralField.unit(ell, level)
    chk = gl.hf_inequalities(u, N, s)
    assert not chk.high_ok
    assert chk.high_ok_sharp
    assert chk.high_ratio <= gl.hf_constants(s)[1]


def test_hf_zero_field():
    assert gl.hf_inequalities(hm.SpectralField.zeros(2, 4), 2.0, 0.5).low_ok


# -- exponents and windows ---------------------------------------------------------------

def test_window_lengths():
    assert gl.window_length(10, 0.5, 3, eps=0.0) == pytest.approx(1e-2)
    assert gl.window_length(10, 0.5, 2, eps=0.0) == pytest.approx(1e-1)
    assert gl.window_length(1, 0.3, 2) == 1.0
    with pytest.raises(ValueError):
        gl.window_length(4, 1.2, 2)


def test_growth_exponent_values():
    assert gl.growth_exponent(0.5, 2) == 1.0
    a, b = gl.growth_exponent_branches(0.5)
    assert a == pytest.approx(0.5, abs=1e-15) and b == pytest.approx(0.5, abs=1e-15)
    assert abs(a - b) < 1e-12
    with pytest.raises(ValueError):
        gl.growth_exponent(0.1, 3)


def test_growth_exponent_continuous_at_half():
    for h in (1e-6, 1e-9):
        assert abs(gl.growth_exponent(0.5 - h, 3) - gl.growth_exponent(0.5 + h, 3)) < 10 * h


def test_beta_values():
    assert gl.fluctuation_exponent(0.5) == -2.5
    assert gl.fluctuation_exponent(0.75) == pytest.approx(2 * 0.75 - 3.5)
    assert abs(gl.fluctuation_exponent(0.5) - (2 * 0.5 - 3.5)) < 1e-12


def test_growth_exponent_decreasing_in_s():
    s = np.linspace(0.2, 0.9, 15)
    for d in (2, 3):
        c = [gl.growth_exponent(x, d) for x in s]
        assert np.all(np.diff(c) < 0)


# -- window ledger ---------------------------------------------------------------------

def small_profile(L=32):
    return sa.CoefficientProfile.cluster_flat(2, L, 0.8, 0.5, 0.5)


def test_linear_run_has_no_remainder():
    spec = nls.EquationSpec.cubic(2, coupling=0.0)
    led = gl.bourgain_run(small_profile(), "gaussian", 0, 0.5, 2, 4, 0.25, 5e-3, spec, trials=2)
    assert np.abs(led.w_l2).max() < 1e-13
    assert np.abs(led.increment).max() < 1e-12
    np.testing.assert_allclose(led.E_low, led.E_low[0:1], rtol=1e-12)


def test_empty_high_part():
    g = sa.CoefficientProfile.cluster_flat(2, 6, 0.8, 0.5, 0.5)
    led = gl.bourgain_run(g, "gaussian", 0, 0.5, 2, 8, 0.25, 5e-3, trials=2)
    assert led.n_windows == 2
    assert np.abs(led.increment).max() < 1e-12


def test_ledger_reconstruction_and_shapes():
    led = gl.bourgain_run(small_profile(), "gaussian", 1, 0.5, 2, 4, 0.25, 5e-3, trials=3)
    assert led.reconstruction_defect < 1e-14
    assert led.E_low.shape == (led.n_windows, 3)
    assert len(led.rows(0)) == led.n_windows and len(led.rows(0)[0]) == len(gl.LEDGER_COLUMNS)
    assert np.all(led.bound_ok)


def test_increments_decrease_with_N():
    meds = [gl.bourgain_run(small_profile(64), "gaussian", 0, 0.5, 2, N, 0.25, 5e-3, trials=4).median_increment
            for N in (4, 8, 16)]
    assert meds[0] > meds[1] > meds[2]


def test_horizon_shorter_than_window():
    with pytest.raises(ValueError):
        gl.bourgain_run(small_profile(), "gaussian", 0, 0.5, 2, 8, 0.1, 5e-3)


def test_profile_dimension_checked():
    with pytest.raises(ValueError):
        gl.bourgain_run(small_profile(), "gaussian", 0, 0.5, 3, 4, 0.25, 5e-3)


# -- growth fit ------------------------------------------------------------------------

def test_linear_growth_exponent_zero():
    spec = nls.EquationSpec.cubic(2, coupling=0.0)
    fit = gl.growth_fit(small_profile(12), "gaussian", 0, 0.5, 2, (0.5, 1, 2), 1e-2, spec, trials=2)
    assert fit.median_exponent == 0.0
    assert np.all(fit.max_energy < 1e-20)


def test_growth_fit_under_envelope():
    g = gl.regularity_profile(2, 12, 0.5)
    g = g.scaled(3.0 / g.norm(0))
    fit = gl.growth_fit(g, "gaussian", 0, 0.5, 2, (0.5, 1, 2, 4), 1e-2, trials=3)
    assert fit.envelope_ok
    assert fit.c_s == 1.0


def test_growth_fit_needs_three_horizons():
    with pytest.raises(ValueError):
        gl.growth_fit(small_profile(8), "gaussian", 0, 0.5, 2, (1, 2), 1e-2)


def test_regularity_profile_in_space():
    g = gl.regularity_profile(2, 10, 0.3)
    b = (1 + 0.3) / 2 + 0.05
    assert sa.cluster_flat_in_space(b, 0.3)
    assert g.s == 0.3 and g.kind == "cluster-flat"

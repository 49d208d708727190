import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial.hermite import hermval

from hermite_nls import hermite as hm


def phi_direct(n, x):
    """Physicists' Hermite polynomial with explicit normalization."""
    c = np.zeros(n + 1)
    c[n] = 1.0
    norm = 1.0 / math.sqrt(2.0 ** n * math.factorial(n) * math.sqrt(math.pi))
    return norm * hermval(x, c) * np.exp(-x ** 2 / 2)


# -- single functions -------------------------------------------------------

def test_phi0_at_origin():
    assert hm.hermite_eval(0, 0.0) == pytest.approx(math.pi ** -0.25, abs=1e-15)


def test_phi1_odd_parity_zero():
    assert hm.hermite_eval(1, 0.0) == 0.0


def test_phi2_at_origin():
    assert hm.hermite_eval(2, 0.0) == pytest.approx(-math.pi ** -0.25 / math.sqrt(2), abs=1e-15)


@pytest.mark.parametrize("n", [0, 1, 5, 12, 30])
def test_matches_explicit_polynomials(n):
    x = np.linspace(-6, 6, 41)
    np.testing.assert_allclose(hm.hermite_functions(n, x)[n], phi_direct(n, x), atol=1e-12)


def test_far_tail_underflows_to_zero():
    vals, under = hm.hermite_functions(4, np.array([60.0]), return_underflow=True)
    assert np.all(vals == 0) and np.all(under)


# -- quadrature -------------------------------------------------------------

def test_gauss_hermite_one_node():
    x, w, _ = hm.gauss_hermite(1)
    assert x.tolist() == [0.0]
    assert w[0] == pytest.approx(math.sqrt(math.pi))


def test_gauss_hermite_two_nodes():
    x, w, _ = hm.gauss_hermite(2)
    np.testing.assert_allclose(np.sort(x), [-1 / math.sqrt(2), 1 / math.sqrt(2)], atol=1e-15)
    np.testing.assert_allclose(w, [math.sqrt(math.pi) / 2] * 2, rtol=1e-14)


@pytest.mark.parametrize("n", [3, 10, 50, 150])
def test_weights_sum_to_sqrt_pi(n):
    _, w, _ = hm.gauss_hermite(n)
    assert abs(w.sum() - math.sqrt(math.pi)) < 1e-12


def test_orthonormality_to_degree_100():
    x, _, lifted = hm.gauss_hermite(110)
    phi = hm.hermite_functions(100, x)
    err = np.abs((phi * lifted) @ phi.T - np.eye(101)).max()
    assert err < 1e-10


def test_scaled_grid_integrates_fourfold_products():
    g = hm.grid_for(1, 6, order=4)
    phi = hm.hermite_functions(6, g.nodes)
    got = np.sum(g.lifted * phi[0] ** 4)
    assert got == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-13)


def test_degree_budget_error():
    g = hm.QuadratureGrid(2, 5, 4)
    with pytest.raises(hm.DegreeBudgetError):
        g.check_level(3)


# -- indices and clusters ---------------------------------------------------

@pytest.mark.parametrize("ell, lam", [((0, 0), 2), ((1, 0, 2), 9), ((5,), 11)])
def test_eigenvalue_formula(ell, lam):
    assert hm.eigenvalue(ell) == lam


def test_graded_lex_order_and_index():
    idx = hm.multi_indices(2, 2)
    assert [tuple(r) for r in idx] == [(0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0)]
    for k, ell in enumerate(hm.multi_indices(3, 5)):
        assert hm.mode_index(ell) == k


def test_cluster_j3_d2():
    c = hm.cluster_members(3, 2, 10)
    assert c.level == 2 and len(c) == 3


def test_cluster_j2_d3():
    c = hm.cluster_members(2, 3, 10)
    assert c.level == 1 and len(c) == 3 == 2 * 3 // 2


def test_cluster_j0_d2_empty():
    assert hm.cluster_cardinality(0, 2) == 0
    assert len(hm.cluster_members(0, 2, 10)) == 0


@pytest.mark.parametrize("d", [2, 3])
def test_cluster_cardinality_exhaustive(d):
    for j in range(0, 51):
        count = sum(1 for ell in product(range(j + 1), repeat=d)
                    if 2 * j <= 2 * sum(ell) + d < 2 * j + 2)
        assert hm.cluster_cardinality(j, d) == count


def test_level_cluster_inverse():
    for d in (2, 3):
        for n in range(30):
            assert hm.cluster_level(hm.level_cluster(n, d), d) == n


# -- transforms --------------------------------------------------------------

def test_unit_vectors_round_trip():
    L = 6
    g = hm.grid_for(2, L)
    for k in range(hm.n_modes(2, L)):
        c = np.zeros(hm.n_modes(2, L))
        c[k] = 1
        back = hm.analyze(hm.synthesize(c, 2, L, g), 2, L, g)
        assert np.abs(back - c).max() < 1e-10


def test_forward_of_phi3_samples():
    L = 8
    g = hm.grid_for(1, L)
    u = hm.forward_transform(hm.hermite_functions(3, g.nodes)[3], g, L)
    expect = np.zeros(L + 1)
    expect[3] = 1
    np.testing.assert_allclose(u.coeffs, expect, atol=1e-12)


@pytest.mark.parametrize("L", [12, 20])
def test_random_round_trip(L):
    rng = np.random.default_rng(L)
    c = rng.normal(size=hm.n_modes(2, L)) + 1j * rng.normal(size=hm.n_modes(2, L))
    u = hm.SpectralField(2, L, c)
    g = hm.grid_for(2, L)
    back = hm.forward_transform(hm.inverse_transform(u, g), g, L)
    assert np.linalg.norm(back.coeffs - c) / np.linalg.norm(c) < 1e-10


def test_synthesize_is_batched():
    L = 5
    g = hm.grid_for(2, L)
    rng = np.random.default_rng(0)
    c = rng.normal(size=(3, hm.n_modes(2, L)))
    batch = hm.synthesize(c, 2, L, g)
    for i in range(3):
        np.testing.assert_allclose(batch[i], hm.synthesize(c[i], 2, L, g), atol=1e-14)


def test_evaluate_matches_grid_synthesis():
    L = 7
    rng = np.random.default_rng(1)
    u = hm.SpectralField(2, L, rng.normal(size=hm.n_modes(2, L)))
    g = hm.grid_for(2, L)
    pts = g.tensor_nodes().reshape(-1, 2)
    np.testing.assert_allclose(hm.evaluate(u, pts), hm.inverse_transform(u, g).ravel(), atol=1e-12)


def test_json_round_trip():
    u = hm.SpectralField(2, 3, np.arange(10) * (1 + 0.5j))
    v = hm.SpectralField.from_json(u.to_json())
    assert np.array_equal(u.coeffs, v.coeffs) and v.max_level == 3


def test_wrong_coefficient_count():
    with pytest.raises(ValueError):
        hm.SpectralField(2, 2, np.zeros(5))


# -- norms and the linear flow -----------------------------------------------

def test_parseval():
    c = np.array([3, 0, 4, 0, 0, 0], complex)
    assert hm.sobolev_norm(hm.SpectralField(2, 2, c), 0) == pytest.approx(5.0)


def test_sobolev_single_mode():
    assert hm.sobolev_norm(hm.SpectralField.unit((1, 0)), 1) == pytest.approx(2.0)


def test_sobolev_two_modes_by_hand():
    c = np.zeros(hm.n_modes(2, 2), complex)
    c[hm.mode_index((0, 0))] = 1.0
    c[hm.mode_index((1, 1))] = 2j
    # lambda = 2 and 6
    expect = math.sqrt(2 ** 0.5 * 1 + 6 ** 0.5 * 4)
    assert hm.sobolev_norm(hm.SpectralField(2, 2, c), 0.5) == pytest.approx(expect, rel=1e-14)


def test_wsp_l2_is_sobolev():
    rng = np.random.default_rng(2)
    u = hm.SpectralField(2, 6, rng.normal(size=hm.n_modes(2, 6)))
    for sigma in (0.0, 0.7, 1.0):
        got = hm.wsp_norm(u, sigma, 2, hm.grid_for(2, 6))
        assert abs(got - hm.sobolev_norm(u, sigma)) < 1e-10


def test_wsp_linf_gaussian():
    u = hm.SpectralField.unit((0,), 0)
    got = hm.wsp_norm(u, 0, math.inf, hm.norm_grid(1, 0, math.inf))
    # odd node count puts a node at the origin, so the grid max is exact here
    assert got == pytest.approx(math.pi ** -0.25, rel=1e-14)


def test_l4_norm_exact_on_order4_grid():
    u = hm.SpectralField.unit((0, 0), 3)
    got = hm.wsp_norm(u, 0, 4, hm.norm_grid(2, 3, 4))
    assert got ** 4 == pytest.approx(1 / (2 * math.pi), rel=1e-13)


def test_propagation_identity_at_zero():
    u = hm.SpectralField(2, 3, np.arange(10) + 1j)
    assert np.array_equal(hm.linear_propagate(u, 0.0).coeffs, u.coeffs)


def test_propagation_at_pi_is_global_phase():
    rng = np.random.default_rng(3)
    L = 8
    u = hm.SpectralField(2, L, rng.normal(size=hm.n_modes(2, L)) + 1j * rng.normal(size=hm.n_modes(2, L)))
    g = hm.grid_for(2, L)
    a = np.abs(hm.inverse_transform(u, g))
    b = np.abs(hm.inverse_transform(hm.linear_propagate(u, math.pi), g))
    assert np.abs(a - b).max() < 1e-10


@settings(max_examples=30, deadline=None)
@given(t=st.floats(-50, 50), s=st.floats(0, 2), seed=st.integers(0, 2 ** 32 - 1))
def test_propagation_preserves_sobolev_norms(t, s, seed):
    rng = np.random.default_rng(seed)
    u = hm.SpectralField(2, 6, rng.normal(size=hm.n_modes(2, 6)) + 1j * rng.normal(size=hm.n_modes(2, 6)))
    v = hm.linear_propagate(u, t)
    assert abs(hm.sobolev_norm(v, s) - hm.sobolev_norm(u, s)) < 1e-12 * max(1, hm.sobolev_norm(u, s))


@settings(max_examples=25, deadline=None)
@given(L=st.integers(0, 10), d=st.sampled_from([1, 2, 3]), seed=st.integers(0, 2 ** 32 - 1))
def test_round_trip_property(L, d, seed):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=hm.n_modes(d, L))
    g = hm.grid_for(d, L)
    back = hm.analyze(hm.synthesize(c, d, L, g), d, L, g)
    assert np.abs(back - c).max() < 1e-10 * max(1, np.abs(c).max())


def test_shell_norms_sum_to_l2():
    rng = np.random.default_rng(4)
    u = hm.SpectralField(3, 5, rng.normal(size=hm.n_modes(3, 5)))
    assert np.sum(hm.shell_norms(u) ** 2) == pytest.approx(np.sum(np.abs(u.coeffs) ** 2))

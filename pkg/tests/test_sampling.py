import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hermite_nls import hermite as hm
from hermite_nls import sampling as sa

LAWS = ["gaussian", "rademacher", "uniform"]


# -- squeezing constant -------------------------------------------------------

def test_equal_within_clusters_gives_one():
    g = sa.CoefficientProfile.cluster_flat(2, 12, 1.3)
    assert g.squeezing == pytest.approx(1.0, abs=1e-12)


def test_single_entry_in_two_member_cluster():
    c = np.zeros(hm.n_modes(2, 3))
    c[hm.mode_index((1, 0))] = 1.0
    assert sa.squeezing_constant_of(c, 2, 3) == 2.0


def test_one_populated_cluster_of_three():
    c = np.zeros(hm.n_modes(2, 4))
    c[hm.shell_slice(2, 2)] = 0.7
    assert sa.squeezing_constant_of(c, 2, 4) == pytest.approx(1.0)


def test_squeezing_of_bare_field():
    assert sa.squeezing_constant(hm.SpectralField.unit((0, 3), 3)) == 4.0


def test_cluster_flat_membership_rule():
    assert sa.cluster_flat_in_space(1.0, 0.5)
    assert not sa.cluster_flat_in_space(0.7, 0.5)


# -- profile constructors -----------------------------------------------------

def test_power_profile():
    g = sa.CoefficientProfile.power(2, 4, 0.5)
    np.testing.assert_allclose(g.base.coeffs.real, hm.eigenvalues(2, 4) ** -0.5)


def test_cluster_flat_cluster_mass():
    g = sa.CoefficientProfile.cluster_flat(2, 10, 1.0, amplitude=2.0)
    norms = hm.shell_norms(g.base)
    for n in range(11):
        j = hm.level_cluster(n, 2)
        assert norms[n] == pytest.approx(2.0 / j)


def test_from_spec_variants():
    a = sa.CoefficientProfile.from_spec({"dim": 2, "max_level": 5, "profile": "power", "a": 1})
    assert a.kind == "power"
    b = sa.CoefficientProfile.from_spec(json.dumps(
        {"dim": 2, "s": 0.5, "max_level": 5, "profile": "cluster-flat", "b": 1.5}))
    assert b.kind == "cluster-flat" and b.s == 0.5
    c = sa.CoefficientProfile.from_spec({"dim": 2, "profile": [1, [0, 2], 0.5]})
    assert c.max_level == 1 and c.base.coeffs[1] == 2j
    with pytest.raises(ValueError):
        sa.CoefficientProfile.from_spec({"dim": 2, "max_level": 2, "profile": "spiky"})


# -- draws ---------------------------------------------------------------------

@pytest.mark.parametrize("law", LAWS)
def test_determinism(law):
    g = sa.CoefficientProfile.cluster_flat(2, 8, 1.0)
    a = sa.sample(g, law, 11, 4).coeffs
    b = sa.sample(g, law, 11, 4).coeffs
    assert np.array_equal(a, b)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 64 - 1), trial=st.integers(0, 10 ** 9), n=st.integers(1, 200))
def test_prefix_consistency(seed, trial, n):
    long = sa.law_draws("gaussian", seed, trial, 256)
    assert np.array_equal(sa.law_draws("gaussian", seed, trial, n), long[:n])


def test_trials_are_distinct_streams():
    a = sa.law_draws("gaussian", 0, 0, 64)
    b = sa.law_draws("gaussian", 0, 1, 64)
    c = sa.law_draws("gaussian", 1, 0, 64)
    assert not np.array_equal(a, b) and not np.array_equal(a, c)


def test_batch_matches_single_samples():
    g = sa.CoefficientProfile.cluster_flat(2, 6, 1.0)
    batch = sa.sample_batch(g, "uniform", 3, [5, 2, 9])
    for row, t in zip(batch, [5, 2, 9]):
        assert np.array_equal(row.coeffs, sa.sample(g, "uniform", 3, t).coeffs)


def test_rademacher_preserves_modulus():
    g = sa.CoefficientProfile.power(2, 6, 0.7)
    u = sa.sample(g, "rademacher", 0, 0)
    np.testing.assert_array_equal(np.abs(u.coeffs), np.abs(g.base.coeffs))


@pytest.mark.parametrize("law", LAWS)
def test_unit_variance_and_centred(law):
    g = sa.law_draws(law, 8, 0, 200_000)
    assert abs(g.mean()) < 5 / math.sqrt(len(g))
    assert abs(g.var() - 1) < 0.02


@pytest.mark.parametrize("law", ["gaussian", "uniform"])
def test_ks_does_not_reject(law):
    assert sa.ks_pvalue(law, seed=1, draws=50_000) > 1e-3


def test_ks_rejects_discrete_law():
    with pytest.raises(ValueError):
        sa.ks_pvalue("rademacher")


@pytest.mark.parametrize("law", LAWS)
def test_expected_sobolev_norm(law):
    g = sa.CoefficientProfile.cluster_flat(2, 8, 0.9, s=0.5)
    trials = 10_000
    batch = sa.sample_batch(g, law, 2, trials)
    lam = hm.eigenvalues(2, 8)
    sq = np.sum(lam ** 0.5 * np.abs(batch.coeffs) ** 2, axis=1)
    target = g.norm(0.5) ** 2
    # rademacher draws have zero variance here, so allow for rounding
    assert abs(sq.mean() - target) <= 3 * sq.std(ddof=1) / math.sqrt(trials) + 1e-12 * target


# -- moment generating function -----------------------------------------------

def test_mgf_at_zero():
    rep = sa.mgf_check("gaussian", t=[0.0, 1.0], trials=1000)
    assert rep.empirical[0] == 1.0


def test_mgf_gaussian_constant():
    rep = sa.mgf_check("gaussian", trials=100_000)
    assert abs(rep.fitted_c - 0.5) < 0.05
    assert rep.exact_c == pytest.approx(0.5)


@pytest.mark.parametrize("law", ["rademacher", "uniform"])
def test_mgf_below_gaussian(law):
    t = np.linspace(-5, 5, 101)
    assert np.all(sa.RandomLaw(law).exact_mgf(t) <= np.exp(t ** 2 / 2) * (1 + 1e-15))
    rep = sa.mgf_check(law, trials=100_000)
    assert rep.fitted_c <= 0.5 + 0.05


def test_mgf_rejects_large_t():
    with pytest.raises(ValueError):
        sa.mgf_check("gaussian", t=[6.0])


def test_support_condition():
    assert sa.RandomLaw.GAUSSIAN.satisfies_support_condition
    assert not sa.RandomLaw.RADEMACHER.satisfies_support_condition

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lambdavar.poisson_binomial import pb_build, pb_cdf, pb_quantile
from oracles import binomial_pmf, brute_force_pmf

probs_st = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=40)


def test_two_probs_by_hand():
    d = pb_build([0.1, 0.2])
    np.testing.assert_allclose(d.pmf, [0.72, 0.26, 0.02], atol=1e-15)
    assert pb_cdf(d, 0) == pytest.approx(0.72, abs=1e-15)
    assert pb_quantile(d, 0.9) == 1
    assert pb_cdf(d, 2) == 1.0


def test_binomial_three_halves():
    np.testing.assert_allclose(pb_build([0.5] * 3).pmf, [0.125, 0.375, 0.375, 0.125], atol=1e-15)


def test_degenerate_zero():
    np.testing.assert_array_equal(pb_build([0.0]).pmf, [1.0, 0.0])


def test_matches_enumeration(rng):
    for _ in range(30):
        p = rng.uniform(size=rng.integers(1, 13))
        np.testing.assert_allclose(pb_build(p).pmf, brute_force_pmf(p), rtol=0, atol=1e-12)


@pytest.mark.parametrize("T", [1, 7, 25, 60])
def test_equal_p_matches_binomial(T):
    np.testing.assert_allclose(pb_build([0.37] * T).pmf, binomial_pmf(T, 0.37), rtol=0, atol=1e-12)


@given(probs_st)
def test_moments(p):
    d = pb_build(p)
    p = np.array(p)
    assert d.pmf.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(d.pmf >= 0)
    assert d.mean() == pytest.approx(p.sum(), abs=1e-10)
    assert d.var() == pytest.approx(np.sum(p * (1 - p)), abs=1e-10)


@given(probs_st, st.randoms(use_true_random=False))
def test_permutation_invariance(p, r):
    q = list(p)
    r.shuffle(q)
    np.testing.assert_allclose(pb_build(p).pmf, pb_build(q).pmf, atol=1e-13)


@given(probs_st, st.floats(1e-6, 1 - 1e-6))
def test_quantile_definition(p, u):
    d = pb_build(p)
    k = pb_quantile(d, u)
    assert pb_cdf(d, k) >= u - 1e-15
    assert k == 0 or pb_cdf(d, k - 1) < u


def test_sf_complements_cdf():
    d = pb_build(np.full(250, 0.01))
    for k in range(1, 12):
        assert d.sf(k) + d.cdf(k - 1) == pytest.approx(1.0, abs=1e-14)
    assert d.sf(0) == 1.0 and d.sf(251) == 0.0


@pytest.mark.parametrize("bad", [[], [1.2], [-0.1], [np.nan]])
def test_rejects_invalid(bad):
    with pytest.raises(ValueError):
        pb_build(bad)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from support import random_instance
from geordd.cliff import (
    RegionData,
    cliff_posterior,
    cliff_posterior_with_covariates,
    dummy_encode,
    estimate_beta,
)
from geordd.exceptions import DataError
from geordd.gp import Hyperparams


def _oracle(dT, dC, sent, th):
    return oracles.cliff_oracle(dT.locations, dT.outcomes, dC.locations, dC.outcomes,
                                sent.points, th.lengthscale, th.gp_scale, th.noise,
                                th.mean_scale)


@pytest.mark.parametrize("seed", range(20))
def test_cliff_matches_dense_oracle(seed):
    dT, dC, sent, th = random_instance(np.random.default_rng(seed))
    c = cliff_posterior(dT, dC, sent, th)
    mu, cov = _oracle(dT, dC, sent, th)
    np.testing.assert_allclose(c.mean, mu, atol=1e-8, rtol=1e-8)
    np.testing.assert_allclose(c.cov, cov, atol=1e-8, rtol=1e-8)


@pytest.mark.parametrize("seed", range(10))
def test_covariates_match_dense_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    dT, dC, sent, th = random_instance(rng, p=2)
    c = cliff_posterior_with_covariates(dT, dC, sent, th)
    mu, cov, beta = oracles.covariate_oracle(
        dT.locations, dT.outcomes, dT.covariates, dC.locations, dC.outcomes, dC.covariates,
        sent.points, th.lengthscale, th.gp_scale, th.noise, th.mean_scale, th.beta_scale)
    np.testing.assert_allclose(c.mean, mu, atol=1e-8, rtol=1e-8)
    np.testing.assert_allclose(c.cov, cov, atol=1e-8, rtol=1e-8)
    b, resid = estimate_beta([dT, dC], th)
    np.testing.assert_allclose(b, beta, atol=1e-8, rtol=1e-8)
    np.testing.assert_allclose(resid[0].outcomes, dT.outcomes - dT.covariates @ b)
    assert resid[0].covariates is None


def test_single_units_hand_value():
    # one unit each side at the border point itself: closed form
    th = Hyperparams(1.0, 1.0, 1.0, 1.0)
    dT = RegionData([[0.0, 0.0]], [2.0])
    dC = RegionData([[0.0, 0.0]], [0.0])
    c = cliff_posterior(dT, dC, np.array([[0.0, 0.0]]), th)
    # prior variance 2 and noise 1 per side: mean 2/3 y and variance 2 - 4/3
    assert c.mean[0] == pytest.approx(4 / 3)
    assert c.cov[0, 0] == pytest.approx(4 / 3)


def test_covariance_symmetric_psd():
    dT, dC, sent, th = random_instance(np.random.default_rng(7), n_max=20, R_max=10)
    c = cliff_posterior(dT, dC, sent, th)
    np.testing.assert_array_equal(c.cov, c.cov.T)
    assert np.linalg.eigvalsh(c.cov).min() > -1e-10


@settings(max_examples=25)
@given(st.integers(0, 2**31), st.floats(-50, 50), st.floats(0.1, 10))
def test_affine_equivariance(seed, shift, scale):
    dT, dC, sent, th = random_instance(np.random.default_rng(seed))
    base = cliff_posterior(dT, dC, sent, th)
    # a constant added to both sides leaves the cliff unchanged up to the intercept
    # shrinkage; scaling outcomes and scales together scales the mean exactly
    th_s = th.scaled(scale)
    scaled = cliff_posterior(dT.with_outcomes(scale * dT.outcomes),
                             dC.with_outcomes(scale * dC.outcomes), sent, th_s)
    np.testing.assert_allclose(scaled.mean, scale * base.mean, rtol=1e-7, atol=1e-9)
    np.testing.assert_allclose(scaled.cov, scale**2 * base.cov, rtol=1e-7, atol=1e-9)


def test_mismatched_covariates():
    dT, dC, sent, th = random_instance(np.random.default_rng(1), p=2)
    bad = RegionData(dC.locations, dC.outcomes, dC.covariates[:, :1])
    with pytest.raises(ValueError, match="covariate columns"):
        cliff_posterior_with_covariates(dT, bad, sent, th)


def test_region_data_validation():
    with pytest.raises((DataError, ValueError)):
        RegionData([[0, 0], [1, 1]], [1.0])
    with pytest.raises((DataError, ValueError)):
        RegionData([[0, np.nan]], [1.0])


def test_beta_zero_scale_gives_zero():
    dT, dC, sent, th = random_instance(np.random.default_rng(2), p=1)
    b, _ = estimate_beta([dT, dC], Hyperparams(th.lengthscale, th.gp_scale, th.noise,
                                                th.mean_scale, 0.0))
    np.testing.assert_array_equal(b, [0.0])


def test_dummy_encode():
    M, levels = dummy_encode(["b", "a", "b", "c"])
    assert list(levels) == ["a", "b", "c"]
    np.testing.assert_array_equal(M, [[0, 1, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

import oracles
from support import random_instance
from geordd.cliff import RegionData, cliff_posterior
from geordd.gp import Hyperparams
from geordd.late import inverse_variance_weights, late_inverse_variance
from geordd.significance import (
    Method,
    NullCalibrator,
    NullModel,
    TestResult,
    _bootstrap_p,
    chi2_statistic,
    mll_statistic,
    null_statistic_variance,
    placebo_suite,
    test_bootstrap as run_bootstrap,
    test_inv_analytic as run_analytic,
    test_inv_uncalibrated as run_uncalibrated,
)


class TestBootstrapP:
    def test_add_one_rule(self):
        draws = np.array([1.0, 2.0, 3.0, 4.0])
        assert _bootstrap_p("MLL", 2.5, draws)[0] == pytest.approx(3 / 5)
        assert _bootstrap_p("MLL", 10, draws)[0] == pytest.approx(1 / 5)
        assert _bootstrap_p("CHI2", -1, draws)[0] == pytest.approx(1.0)

    def test_ties_count_as_extreme(self):
        assert _bootstrap_p("CHI2", 2.0, np.array([1.0, 2.0, 3.0]))[0] == pytest.approx(3 / 4)
        assert _bootstrap_p("INV", -2.0, np.array([2.0, -1.0, 0.5]))[0] == pytest.approx(2 / 4)

    def test_inv_is_two_sided(self):
        draws = np.array([-5.0, -3.0, 1.0, 2.0])
        assert _bootstrap_p("INV", 2.5, draws)[0] == _bootstrap_p("INV", -2.5, draws)[0]
        assert _bootstrap_p("INV", 2.5, draws)[0] == pytest.approx(3 / 5)

    @settings(max_examples=30)
    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=50), st.floats(-10, 10))
    def test_bounds(self, draws, obs):
        for kind in ("INV", "MLL", "CHI2"):
            p = _bootstrap_p(kind, obs, np.array(draws))[0]
            assert 1 / (len(draws) + 1) <= p <= 1.0


@pytest.mark.parametrize("seed", range(8))
def test_null_variance_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    dT, dC, sent, th = random_instance(rng)
    w = rng.uniform(0.2, 1, sent.R)
    v = null_statistic_variance(dT, dC, sent, th, w)
    ref = oracles.null_variance_oracle(dT.locations, dC.locations, sent.points, w,
                                       th.lengthscale, th.gp_scale, th.noise, th.mean_scale)
    assert v == pytest.approx(ref, rel=1e-8)


def test_null_model_covariance():
    th = Hyperparams(1.0, 1.5, 0.5, 2.0)
    X_T, X_C = np.array([[0.5, 0.0]]), np.array([[-0.5, 0.0]])
    m = NullModel(X_T, X_C, th)
    k = 4.0 + 2.25 * np.exp(-0.5)
    np.testing.assert_allclose(m.cov, [[4 + 2.25 + 0.25, k], [k, 4 + 2.25 + 0.25]])
    assert m.sample(np.random.default_rng(0), 7).shape == (2, 7)


def test_calibrator_statistics_match_direct(rng):
    dT, dC, sent, th = random_instance(rng, n_max=14)
    cal = NullCalibrator(dT.locations, dC.locations, sent, th)
    Y = np.concatenate([dT.outcomes, dC.outcomes])
    cliff = cliff_posterior(dT, dC, sent, th)
    assert cal.inv(Y) == pytest.approx(late_inverse_variance(cliff).mean, abs=1e-9)
    assert cal.inv_posterior_var() == pytest.approx(late_inverse_variance(cliff).var, rel=1e-8)
    assert cal.chi2(Y[:, None])[0] == pytest.approx(chi2_statistic(cliff), rel=1e-7)
    assert cal.mll(Y[:, None])[0] == pytest.approx(mll_statistic(dT, dC, th), abs=1e-8)
    w = inverse_variance_weights(cliff.cov)
    assert cal.inv_null_var() == pytest.approx(
        null_statistic_variance(dT, dC, sent, th, w), rel=1e-8)


def test_mll_matches_scipy(rng):
    dT, dC, _, th = random_instance(rng, n_max=10)
    Y = np.concatenate([dT.outcomes, dC.outcomes])
    X = np.vstack([dT.locations, dC.locations])
    g = oracles.gram
    args = (th.lengthscale, th.gp_scale, th.mean_scale)
    ll1 = sum(multivariate_normal(np.zeros(d.n), g(d.locations, d.locations, *args)
                                  + th.noise**2 * np.eye(d.n)).logpdf(d.outcomes)
              for d in (dT, dC))
    ll0 = multivariate_normal(np.zeros(len(Y)),
                              g(X, X, *args) + th.noise**2 * np.eye(len(Y))).logpdf(Y)
    assert mll_statistic(dT, dC, th) == pytest.approx(ll1 - ll0, rel=1e-9, abs=1e-9)


class TestTests:
    def setup_method(self):
        rng = np.random.default_rng(11)
        self.dT, self.dC, self.sent, self.th = random_instance(rng, n_max=20, R_max=8)

    def test_analytic_p(self):
        r = run_analytic(self.dT, self.dC, self.sent, self.th)
        from scipy.stats import norm
        assert r.p_value == pytest.approx(2 * norm.cdf(-abs(r.statistic) / r.null_summary["sd"]))
        assert r.method is Method.INV_ANALYTIC

    def test_uncalibrated_smaller_sd(self):
        a = run_analytic(self.dT, self.dC, self.sent, self.th)
        u = run_uncalibrated(self.dT, self.dC, self.sent, self.th)
        assert a.statistic == u.statistic

    def test_bootstrap_determinism(self):
        a = run_bootstrap(self.dT, self.dC, self.sent, self.th, "CHI2", B=300, seed=4)
        b = run_bootstrap(self.dT, self.dC, self.sent, self.th, "CHI2", B=300, seed=4,
                          n_jobs=2)
        c = run_bootstrap(self.dT, self.dC, self.sent, self.th, "CHI2", B=300, seed=5)
        assert a.p_value == b.p_value and a.null_summary == b.null_summary
        assert a.null_summary != c.null_summary
        assert a.B == 300 and a.seed == 4

    def test_bootstrap_validation(self):
        with pytest.raises(ValueError, match="at least"):
            run_bootstrap(self.dT, self.dC, self.sent, self.th, "INV", B=10)
        with pytest.raises(ValueError, match="unknown"):
            run_bootstrap(self.dT, self.dC, self.sent, self.th, "KS", B=200)

    def test_result_round_trip(self):
        r = run_bootstrap(self.dT, self.dC, self.sent, self.th, "MLL", B=200, seed=1)
        back = TestResult.from_dict(json.loads(r.to_json()))
        assert back.to_dict() == r.to_dict()

    def test_null_draw_variance_matches_analytic(self):
        cal = NullCalibrator(self.dT.locations, self.dC.locations, self.sent, self.th)
        draws = cal.null_draws(["INV"], 20000, 0)["INV"]
        assert np.var(draws) == pytest.approx(cal.inv_null_var(), rel=0.05)


def test_chi2_doc_value():
    from geordd.cliff import CliffPosterior
    c = CliffPosterior(np.zeros((2, 2)), np.array([1.0, 1.0]), np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert chi2_statistic(c) == pytest.approx(2 / 3)


class TestPlacebo:
    def test_runs_and_records(self, rng):
        X = rng.uniform(0, 1, (40, 2))
        region = RegionData(X, rng.normal(size=40))
        th = Hyperparams(0.3, 1.0, 0.5, 2.0)
        res = placebo_suite(region, th, angles=[10, 50, 90], R=10)
        assert res.p_values.shape == (3,) and np.all(np.isfinite(res.p_values))
        counts, _ = res.histogram()
        assert counts.sum() == 3
        assert "correlated" in res.to_dict()["note"]

    def test_csv(self, rng, tmp_path):
        region = RegionData(rng.uniform(0, 1, (25, 2)), rng.normal(size=25))
        res = placebo_suite(region, Hyperparams(0.3, 1, 0.5, 2), angles=[30, 60], R=5,
                            statistic="INV", B=100, seed=3)
        res.to_csv(tmp_path / "p.csv")
        lines = (tmp_path / "p.csv").read_text().splitlines()
        assert lines[0] == "angle,p_value" and len(lines) == 3

    def test_too_few_units(self, rng):
        with pytest.raises(ValueError, match="at least 20"):
            placebo_suite(RegionData(rng.normal(size=(5, 2)), np.zeros(5)),
                          Hyperparams(1, 1, 1))

    def test_failures_recorded(self):
        X = np.column_stack([np.arange(30.0), np.zeros(30)])
        res = placebo_suite(RegionData(X, np.zeros(30)), Hyperparams(1, 1, 1), angles=[0.0])
        assert np.isnan(res.p_values[0]) and 0.0 in res.failures

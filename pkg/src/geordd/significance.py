"""
Tests of the null hypothesis of no treatment effect at the border.

The null model is a single intercept-plus-GP surface spanning both regions,
so outcomes are continuous across the border. Three statistics are provided:

* INV: the posterior mean of the inverse-variance weighted LATE. It is
  linear in the outcomes, so its null distribution is normal and can be
  calibrated analytically or by parametric bootstrap.
* MLL: the log marginal likelihood of the two-surface model minus that of
  the null model, hyperparameters held fixed.
* CHI2: the quadratic form ``mu^T Sigma^{-1} mu`` of the cliff posterior.

Bootstrap draws reuse a single Cholesky factor of the null covariance and
are generated in fixed-size chunks, each from its own child of a
``numpy.random.SeedSequence``. Results therefore do not depend on how many
threads evaluate the chunks.

Note: this module is deliberately not called ``testing`` so that pytest
does not collect its ``test_*`` functions when they are imported.
"""
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.stats import norm

from .cliff import RegionData, SideFit, _points
from .exceptions import GeoRDDError
from .geometry import place_sentinels, split_by_angle
from .gp import LOG_2PI, cov_matrix, jitter_cholesky
from .late import inverse_variance_weights

__all__ = [
    "Method",
    "NullModel",
    "TestResult",
    "NullCalibrator",
    "PlaceboResult",
    "null_statistic_variance",
    "test_inv_analytic",
    "test_inv_uncalibrated",
    "test_bootstrap",
    "mll_statistic",
    "chi2_statistic",
    "placebo_suite",
    "DRAW_CHUNK",
]

# draws generated per seed-sequence child; fixed so that results do not
# depend on the number of worker threads
DRAW_CHUNK = 256
MIN_BOOTSTRAP = 100


class Method(str, Enum):
    INV_ANALYTIC = "INV_ANALYTIC"
    INV_UNCALIBRATED = "INV_UNCALIBRATED"
    INV_BOOTSTRAP = "INV_BOOTSTRAP"
    MLL_BOOTSTRAP = "MLL_BOOTSTRAP"
    CHI2_BOOTSTRAP = "CHI2_BOOTSTRAP"


_BOOT = {"INV": Method.INV_BOOTSTRAP, "MLL": Method.MLL_BOOTSTRAP,
         "CHI2": Method.CHI2_BOOTSTRAP}


@dataclass(frozen=True)
class TestResult:
    """Outcome of one test against zero effect.

    ``null_summary`` describes the null distribution: its standard deviation
    for analytic tests, quantiles of the bootstrap draws otherwise.
    """

    __test__ = False

    method: Method
    statistic: float
    p_value: float
    B: int = None
    seed: int = None
    null_summary: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "method": Method(self.method).value,
            "statistic": float(self.statistic),
            "p_value": float(self.p_value),
            "B": self.B,
            "seed": self.seed,
            "null_summary": {k: float(v) for k, v in self.null_summary.items()},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        return cls(Method(d["method"]), d["statistic"], d["p_value"], d.get("B"),
                   d.get("seed"), dict(d.get("null_summary", {})))


class NullModel:
    """Joint distribution of ``(Y_T, Y_C)`` under a single spanning surface.

    The diagonal blocks are the one-region covariances (with noise) and the
    off-diagonal block is ``mean_scale**2 + k(X_T, X_C)``.
    """

    def __init__(self, X_T, X_C, theta):
        self.X_T = np.asarray(X_T, dtype=float)
        self.X_C = np.asarray(X_C, dtype=float)
        self.theta = theta
        self.n_T = len(self.X_T)
        X = np.vstack([self.X_T, self.X_C])
        S = cov_matrix(X, X, theta)
        S[np.diag_indices_from(S)] += theta.noise**2
        self.cov = S
        self.factor = jitter_cholesky(S)

    @property
    def n(self):
        return self.cov.shape[0]

    @property
    def K_TC(self):
        return self.cov[:self.n_T, self.n_T:]

    def sample(self, rng, size):
        """``size`` joint draws as an ``(n, size)`` array (columns are draws)."""
        z = rng.standard_normal((self.n, size))
        return self.factor.lower @ z

    def split(self, Y):
        return Y[:self.n_T], Y[self.n_T:]


def _inv_unit_weights(side_T, side_C, cliff_cov):
    w = inverse_variance_weights(cliff_cov)
    v = w / w.sum()
    return v @ side_T.W, -(v @ side_C.W)


class NullCalibrator:
    """Precomputed quantities for testing many outcome vectors at fixed locations.

    All statistics are evaluated column-wise on outcome matrices of shape
    ``(n_T, m)`` and ``(n_C, m)``, which makes bootstrap draws cheap.
    """

    def __init__(self, X_T, X_C, sentinels, theta):
        self.theta = theta
        self.sentinels = sentinels
        pts = _points(sentinels)
        dummy_T = RegionData(X_T, np.zeros(len(X_T)), label="treatment")
        dummy_C = RegionData(X_C, np.zeros(len(X_C)), label="control")
        self.side_T = SideFit(dummy_T, pts, theta)
        self.side_C = SideFit(dummy_C, pts, theta)
        self.cliff_cov = self.side_T.cov + self.side_C.cov
        self.null = NullModel(X_T, X_C, theta)
        self.n_T = len(X_T)
        self._inv = None
        self._chi2 = None

    # statistics -------------------------------------------------------
    @property
    def inv_weights(self):
        if self._inv is None:
            self._inv = np.concatenate(
                _inv_unit_weights(self.side_T, self.side_C, self.cliff_cov))
        return self._inv

    def inv_posterior_var(self):
        w = inverse_variance_weights(self.cliff_cov)
        return float((w @ self.cliff_cov @ w) / w.sum() ** 2)

    def inv_null_var(self):
        a = self.inv_weights
        return float(a @ self.null.cov @ a)

    def _stack(self, Y_T, Y_C):
        Y_T = np.asarray(Y_T, dtype=float)
        Y_C = np.asarray(Y_C, dtype=float)
        return np.concatenate([Y_T, Y_C], axis=0)

    def inv(self, Y):
        return self.inv_weights @ Y

    def mll(self, Y):
        Y_T, Y_C = self.null.split(Y)
        ll1 = 0.0
        for side, y in ((self.side_T, Y_T), (self.side_C, Y_C)):
            z = side.factor.half_solve(y)
            ll1 = ll1 - 0.5 * np.sum(z * z, axis=0) - 0.5 * side.factor.logdet()
        z0 = self.null.factor.half_solve(Y)
        ll0 = -0.5 * np.sum(z0 * z0, axis=0) - 0.5 * self.null.factor.logdet()
        # the 2 pi terms cancel
        return ll1 - ll0

    def chi2(self, Y):
        if self._chi2 is None:
            f = jitter_cholesky(self.cliff_cov)
            W = np.hstack([self.side_T.W, -self.side_C.W])
            self._chi2 = f.half_solve(W)
        z = self._chi2 @ Y
        return np.sum(z * z, axis=0)

    def statistic(self, kind, Y):
        return {"INV": self.inv, "MLL": self.mll, "CHI2": self.chi2}[kind](Y)

    # null distribution ------------------------------------------------
    def null_draws(self, kinds, B, seed, n_jobs=1):
        """Statistics of ``B`` null draws, as a dict ``kind -> (B,) array``."""
        kinds = tuple(kinds)
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        children = ss.spawn(-(-B // DRAW_CHUNK))
        sizes = [min(DRAW_CHUNK, B - i * DRAW_CHUNK) for i in range(len(children))]

        def run(args):
            child, m = args
            Y = self.null.sample(np.random.default_rng(child), m)
            return {k: self.statistic(k, Y) for k in kinds}

        jobs = list(zip(children, sizes))
        if n_jobs and n_jobs > 1:
            with ThreadPoolExecutor(n_jobs) as ex:
                parts = list(ex.map(run, jobs))
        else:
            parts = [run(j) for j in jobs]
        return {k: np.concatenate([p[k] for p in parts]) for k in kinds}


def _bootstrap_p(kind, obs, draws):
    """Add-one Monte Carlo p-value; two-sided for INV, upper tail otherwise."""
    obs = np.atleast_1d(obs)
    B = len(draws)
    if kind == "INV":
        ref = np.sort(np.abs(draws))
        k = B - np.searchsorted(ref, np.abs(obs), side="left")
    else:
        ref = np.sort(draws)
        k = B - np.searchsorted(ref, obs, side="left")
    return (1.0 + k) / (B + 1.0)


def _summary(draws):
    q = np.quantile(draws, [0.05, 0.5, 0.95])
    return {"mean": float(np.mean(draws)), "sd": float(np.std(draws)),
            "q05": q[0], "q50": q[1], "q95": q[2]}


def null_statistic_variance(data_T, data_C, sentinels, theta, w):
    """Null-model variance of the posterior mean of a weighted LATE.

    With unit weights ``a = (w_T, w_C)`` this is ``a^T Sigma_0 a`` where
    ``Sigma_0`` is the null-model joint covariance, which expands to
    ``w^T [W_T S_TT W_T^T + W_C S_CC W_C^T - W_T K_TC W_C^T - W_C K_CT W_T^T] w
    / (w^T 1)**2``.
    """
    pts = _points(sentinels)
    w = np.asarray(getattr(w, "values", w), dtype=float).ravel()
    if len(w) != len(pts):
        raise ValueError(f"{len(w)} weights for {len(pts)} sentinels")
    s = w.sum()
    if s == 0:
        raise ValueError("weights sum to zero")
    v = w / s
    side_T = SideFit(data_T, pts, theta)
    side_C = SideFit(data_C, pts, theta)
    a = np.concatenate([v @ side_T.W, -(v @ side_C.W)])
    null = NullModel(data_T.locations, data_C.locations, theta)
    return float(a @ null.cov @ a)


def _two_sided(stat, sd):
    return float(min(1.0, 2.0 * norm.cdf(-abs(stat) / sd)))


def test_inv_analytic(data_T, data_C, sentinels, theta, calibrator=None):
    """Analytically calibrated test based on the inverse-variance LATE.

    ``p = 2 Phi(-|mu| / sqrt(v0))`` with ``v0`` the null-model variance of
    the LATE posterior mean ``mu``.
    """
    cal = calibrator or NullCalibrator(data_T.locations, data_C.locations, sentinels, theta)
    Y = np.concatenate([data_T.outcomes, data_C.outcomes])
    stat = float(cal.inv(Y))
    sd = np.sqrt(cal.inv_null_var())
    return TestResult(Method.INV_ANALYTIC, stat, _two_sided(stat, sd),
                      null_summary={"sd": sd})


def test_inv_uncalibrated(data_T, data_C, sentinels, theta, calibrator=None):
    """Heuristic test ``2 Phi(-|mu| / sd)`` using the posterior sd of the LATE."""
    cal = calibrator or NullCalibrator(data_T.locations, data_C.locations, sentinels, theta)
    Y = np.concatenate([data_T.outcomes, data_C.outcomes])
    stat = float(cal.inv(Y))
    sd = np.sqrt(cal.inv_posterior_var())
    return TestResult(Method.INV_UNCALIBRATED, stat, _two_sided(stat, sd),
                      null_summary={"sd": sd})


def test_bootstrap(data_T, data_C, sentinels, theta, statistic="INV", B=10000, seed=0,
                   n_jobs=1, calibrator=None):
    """Parametric-bootstrap test with hyperparameters held fixed.

    Draws ``B`` outcome vectors from the null model at the observed
    locations, recomputes the statistic, and returns the add-one p-value
    ``(1 + k) / (B + 1)``. For INV, ``k`` counts draws with
    ``|stat| >= |stat_obs|``; for MLL and CHI2 it counts ``stat >= stat_obs``.
    """
    kind = str(statistic).upper()
    if kind not in _BOOT:
        raise ValueError(f"unknown statistic {statistic!r}; expected INV, MLL or CHI2")
    if B < MIN_BOOTSTRAP:
        raise ValueError(f"B must be at least {MIN_BOOTSTRAP}, got {B}")
    cal = calibrator or NullCalibrator(data_T.locations, data_C.locations, sentinels, theta)
    Y = np.concatenate([data_T.outcomes, data_C.outcomes])
    obs = float(cal.statistic(kind, Y[:, None])[0])
    draws = cal.null_draws([kind], B, seed, n_jobs)[kind]
    p = float(_bootstrap_p(kind, obs, draws)[0])
    return TestResult(_BOOT[kind], obs, p, B, seed, _summary(draws))


def mll_statistic(data_T, data_C, theta):
    """Log marginal likelihood of two separate surfaces minus that of one surface."""
    null = NullModel(data_T.locations, data_C.locations, theta)
    Y = np.concatenate([data_T.outcomes, data_C.outcomes])
    ll1 = 0.0
    for d in (data_T, data_C):
        S = cov_matrix(d.locations, d.locations, theta)
        S[np.diag_indices_from(S)] += theta.noise**2
        f = jitter_cholesky(S)
        z = f.half_solve(d.outcomes)
        ll1 += -0.5 * z @ z - 0.5 * f.logdet() - 0.5 * d.n * LOG_2PI
    z0 = null.factor.half_solve(Y)
    ll0 = -0.5 * z0 @ z0 - 0.5 * null.factor.logdet() - 0.5 * len(Y) * LOG_2PI
    return float(ll1 - ll0)


def chi2_statistic(cliff):
    """``mu^T Sigma^{-1} mu`` for the cliff posterior.

    Examples
    --------
    >>> import numpy as np
    >>> from geordd.cliff import CliffPosterior
    >>> chi2_statistic(CliffPosterior(np.zeros((2, 2)), np.array([3.0, 4.0]), np.eye(2)))
    25.0
    """
    f = jitter_cholesky(cliff.cov)
    z = f.half_solve(cliff.mean)
    return float(z @ z)


@dataclass(frozen=True, eq=False)
class PlaceboResult:
    """p-values from splitting one region along many lines.

    The p-values at neighbouring angles are strongly correlated, so the
    histogram is descriptive only; no formal uniformity test is applied.
    """

    angles: np.ndarray
    p_values: np.ndarray
    failures: dict
    method: Method
    note: str = ("p-values at nearby angles are highly correlated; the histogram "
                 "is descriptive and no uniformity test is applied")

    def histogram(self, bins=10):
        ok = np.isfinite(self.p_values)
        counts, edges = np.histogram(self.p_values[ok], bins=bins, range=(0.0, 1.0))
        return counts, edges

    def rejection_rate(self, alpha=0.05):
        ok = np.isfinite(self.p_values)
        return float(np.mean(self.p_values[ok] < alpha)) if ok.any() else float("nan")

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("angle,p_value\n")
            for a, p in zip(self.angles, self.p_values):
                fh.write(f"{a:.17g},{p:.17g}\n")

    def to_dict(self):
        counts, edges = self.histogram()
        return {
            "method": Method(self.method).value,
            "angles": [float(a) for a in self.angles],
            "p_values": [float(p) for p in self.p_values],
            "failures": {str(k): v for k, v in self.failures.items()},
            "histogram": {"counts": counts.tolist(), "edges": edges.tolist()},
            "note": self.note,
        }


def placebo_suite(region, theta, angles=None, statistic="INV_ANALYTIC", B=1000, seed=0,
                  R=100, n_jobs=1):
    """Run a calibrated test across placebo borders inside a single region.

    For every angle the region is split in half by a line at that angle; the
    two halves play the treatment and control roles. ``statistic`` is
    ``"INV_ANALYTIC"`` or one of the bootstrap statistics ``"INV"``,
    ``"MLL"``, ``"CHI2"``. An angle whose test raises is recorded in
    ``failures`` with a NaN p-value.
    """
    if region.n < 20:
        raise ValueError(f"placebo tests need at least 20 units, got {region.n}")
    angles = np.arange(1, 181, dtype=float) if angles is None else np.asarray(angles, float)
    kind = str(statistic).upper()
    method = Method.INV_ANALYTIC if kind == "INV_ANALYTIC" else _BOOT.get(kind)
    if method is None:
        raise ValueError(f"unknown placebo statistic {statistic!r}")
    seeds = np.random.SeedSequence(seed).spawn(len(angles))
    pvals = np.full(len(angles), np.nan)
    failures = {}
    for i, ang in enumerate(angles):
        try:
            ia, ib, border = split_by_angle(region.locations, ang)
            d_C = region.subset(ia, "control")
            d_T = region.subset(ib, "treatment")
            sent = place_sentinels(border, R)
            if method is Method.INV_ANALYTIC:
                res = test_inv_analytic(d_T, d_C, sent, theta)
            else:
                child_seed = int(seeds[i].generate_state(1)[0])
                res = test_bootstrap(d_T, d_C, sent, theta, kind, B, child_seed, n_jobs)
            pvals[i] = res.p_value
        except (GeoRDDError, ValueError, ArithmeticError) as exc:
            failures[float(ang)] = f"{type(exc).__name__}: {exc}"
    return PlaceboResult(angles, pvals, failures, method)

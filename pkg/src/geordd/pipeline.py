"""
End-to-end analysis: fit, cliff posterior, LATEs and tests, with a
serializable report.
"""
import json
import logging
from dataclasses import dataclass, field

import numpy as np
import shapely

from . import __version__
from .cliff import (
    cliff_posterior,
    cliff_posterior_with_covariates,
    estimate_beta,
)
from .exceptions import StageError
from .geometry import place_sentinels
from .gp import Hyperparams, fit_hyperparams
from .io import load_dataset, resolve_seed
from .late import (
    SCHEME_ORDER,
    Scheme,
    default_delta,
    default_nu,
    kde_density,
    late_density_weighted,
    late_inverse_variance,
    late_projected,
    late_projected_grid,
    late_uniform,
    unit_weights,
)
from .significance import (
    NullCalibrator,
    TestResult,
    test_bootstrap,
    test_inv_analytic,
    test_inv_uncalibrated,
)

__all__ = ["AnalysisReport", "run_pipeline", "STAGES", "ENVELOPE_Z"]

log = logging.getLogger(__name__)

STAGES = ("load", "fit", "covariates", "cliff", "late", "test")
ENVELOPE_Z = 1.959964
# fixed stream index per test so that adding a test does not reseed the others
_TEST_STREAM = {"INV": 0, "MLL": 1, "CHI2": 2}


@dataclass(eq=False)
class AnalysisReport:
    """Results of one pipeline run.

    ``sentinels`` holds the per-sentinel table (index, arc length,
    coordinates, posterior mean and sd, 95% envelope). ``covariance`` is the
    full posterior covariance when requested.
    """

    theta: dict
    sentinels: dict
    late: list = field(default_factory=list)
    tests: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    beta: list = None
    covariance: list = None

    def to_dict(self):
        d = {
            "theta": self.theta,
            "sentinels": self.sentinels,
            "late": self.late,
            "tests": self.tests,
            "provenance": self.provenance,
            "data": self.data,
            "beta": self.beta,
        }
        if self.covariance is not None:
            d["covariance"] = self.covariance
        return d

    def to_json(self):
        # json writes floats with repr, the shortest string that round-trips exactly
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(d["theta"], d["sentinels"], d.get("late", []), d.get("tests", []),
                   d.get("provenance", {}), d.get("data", {}), d.get("beta"),
                   d.get("covariance"))

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    def write_sentinel_csv(self, path):
        cols = ("index", "arc_length", "x", "y", "mean", "sd", "lo95", "hi95")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(cols) + "\n")
            for i in range(len(self.sentinels["index"])):
                vals = [str(self.sentinels["index"][i])] + [
                    format(self.sentinels[c][i], ".17g") for c in cols[1:]]
                fh.write(",".join(vals) + "\n")

    def write_late_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("scheme,mean,sd,tail_prob\n")
            for r in self.late:
                fh.write(f"{r['scheme']},{r['mean']:.17g},{r['sd']:.17g},"
                         f"{r['tail_prob']:.17g}\n")


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def _fit(cfg, ds, seed):
    if cfg.theta is not None:
        return Hyperparams(**cfg.theta)
    init = cfg.theta_init or {}
    Y = np.concatenate([ds.treatment.outcomes, ds.control.outcomes])
    X = np.vstack([ds.treatment.locations, ds.control.locations])
    extent = float(np.ptp(X, axis=0).max()) or 1.0
    sd = float(np.std(Y)) or 1.0
    theta0 = Hyperparams(
        lengthscale=init.get("lengthscale", extent / 5),
        gp_scale=init.get("gp_scale", sd),
        noise=init.get("noise", sd / 2),
        mean_scale=init.get("mean_scale", max(20.0, 10 * abs(float(np.mean(Y))) + 10 * sd)),
        beta_scale=init.get("beta_scale", 0.0),
    )
    return fit_hyperparams([ds.treatment, ds.control], theta0, n_restarts=cfg.n_restarts,
                           seed=seed)


def _density_fn(points, bandwidth):
    return lambda P: kde_density(points, P, bandwidth)


def _polygons(ds):
    if ds.polygons and all(ds.polygons.get(k) is not None for k in ("treatment", "control")):
        return [ds.polygons["treatment"], ds.polygons["control"]]
    # without polygons each region is approximated by the convex hull of its units
    return [shapely.MultiPoint(d.locations).convex_hull.buffer(0)
            for d in (ds.treatment, ds.control)]


def _lates(cfg, theta, d_T, d_C, ds, sent, cliff):
    all_X = np.vstack([d_T.locations, d_C.locations])
    bw = cfg.kde_bandwidth or theta.lengthscale
    delta = cfg.delta if cfg.delta is not None else default_delta(theta)
    nu = cfg.nu if cfg.nu is not None else default_nu(theta)
    rows = []
    for scheme in SCHEME_ORDER:
        if scheme.value not in cfg.schemes:
            continue
        if scheme is Scheme.UNIF:
            r = late_uniform(cliff)
        elif scheme is Scheme.INV:
            r = late_inverse_variance(cliff)
        elif scheme is Scheme.RHO:
            r = late_density_weighted(cliff, kde_density(all_X, sent.points, bw))
        elif scheme is Scheme.PROJ:
            r = late_projected(d_T, d_C, ds.border, theta, delta)
        else:
            density = _density_fn(all_X, bw) if scheme is Scheme.POP else None
            r = late_projected_grid(d_T, d_C, ds.border, _polygons(ds), theta, delta, nu,
                                    density=density)
        row = r.to_dict()
        if scheme in (Scheme.UNIF, Scheme.RHO, Scheme.INV):
            w_T, w_C = unit_weights(d_T, d_C, sent, theta, r.weights)
        else:
            w_T, w_C = r.unit_weights
        row["sum_w_T"] = float(np.sum(w_T))
        row["sum_w_C"] = float(np.sum(w_C))
        rows.append(row)
    return rows


def _tests(cfg, theta, d_T, d_C, sent, seed):
    out = []
    if not cfg.tests:
        return out
    cal = NullCalibrator(d_T.locations, d_C.locations, sent, theta)
    for name in cfg.tests:
        if name == "INV_ANALYTIC":
            r = test_inv_analytic(d_T, d_C, sent, theta, calibrator=cal)
        elif name == "INV_UNCALIBRATED":
            r = test_inv_uncalibrated(d_T, d_C, sent, theta, calibrator=cal)
        else:
            s = int(np.random.SeedSequence([seed, _TEST_STREAM[name]]).generate_state(1)[0])
            r = test_bootstrap(d_T, d_C, sent, theta, name, cfg.B, s, cfg.n_jobs,
                               calibrator=cal)
        out.append(r.to_dict())
    return out


def run_pipeline(config, dataset=None, stop_after=None):
    """Run the analysis described by ``config``.

    Stages run in order (load, fit, covariates, cliff, late, test); a failure
    raises ``StageError`` naming the stage. ``stop_after`` ends the run early
    after the named stage. The result depends only on the config and seed.
    """
    cfg = config
    seed = _stage("load", resolve_seed, cfg.seed, required=cfg.needs_seed)
    ds = dataset if dataset is not None else _stage("load", load_dataset, cfg)
    theta = _stage("fit", _fit, cfg, ds, 0 if seed is None else seed)
    provenance = {"config_hash": cfg.hash(), "seed": seed, "version": __version__}
    data = {"n_treatment": ds.treatment.n, "n_control": ds.control.n,
            "load": ds.report.to_dict() if ds.report else None,
            "covariates": list(ds.covariate_names)}
    d_T, d_C, beta = ds.treatment, ds.control, None
    sent = _stage("cliff", place_sentinels, ds.border, cfg.R)

    def empty_report():
        return AnalysisReport(theta.to_dict(), {}, provenance=provenance, data=data)

    if stop_after == "fit":
        return empty_report()

    if d_T.covariates is not None:
        if cfg.covariate_mode == "residualize":
            b, (d_T, d_C) = _stage("covariates", estimate_beta, [d_T, d_C], theta)
            beta = [float(v) for v in b]
            cliff = _stage("cliff", cliff_posterior, d_T, d_C, sent, theta)
        else:
            cliff = _stage("cliff", cliff_posterior_with_covariates, d_T, d_C, sent, theta)
            b, (d_T, d_C) = _stage("covariates", estimate_beta, [d_T, d_C], theta)
            beta = [float(v) for v in b]
    else:
        cliff = _stage("cliff", cliff_posterior, d_T, d_C, sent, theta)

    sd = cliff.sd
    table = {
        "index": list(range(sent.R)),
        "arc_length": sent.arclength.tolist(),
        "x": sent.points[:, 0].tolist(),
        "y": sent.points[:, 1].tolist(),
        "mean": cliff.mean.tolist(),
        "sd": sd.tolist(),
        "lo95": (cliff.mean - ENVELOPE_Z * sd).tolist(),
        "hi95": (cliff.mean + ENVELOPE_Z * sd).tolist(),
    }
    report = AnalysisReport(theta.to_dict(), table, provenance=provenance, data=data,
                            beta=beta,
                            covariance=cliff.cov.tolist() if cfg.full_covariance else None)
    if stop_after == "cliff":
        return report
    report.late = _stage("late", _lates, cfg, theta, d_T, d_C, ds, sent, cliff)
    if stop_after == "late":
        return report
    report.tests = _stage("test", _tests, cfg, theta, d_T, d_C, sent, seed)
    return report


def test_results(report):
    """The report's tests as ``TestResult`` objects."""
    return [TestResult.from_dict(t) for t in report.tests]


test_results.__test__ = False

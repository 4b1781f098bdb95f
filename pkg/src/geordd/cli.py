"""
Command-line interface.

    geordd fit      --config cfg.yaml --out results/
    geordd cliff    --config cfg.yaml --out results/
    geordd late     --config cfg.yaml --schemes UNIF,INV,PROJ
    geordd test     --config cfg.yaml --tests INV_ANALYTIC,MLL --B 2000 --seed 1
    geordd placebo  --config cfg.yaml --region control --seed 1
    geordd simulate wiggly --n-sims 500 --seed 1 --out sims/

Flags override the config file. The exit status is nonzero exactly when a
requested stage fails.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .exceptions import GeoRDDError, StageError
from .gp import Hyperparams
from .io import AnalysisConfig, load_config, load_dataset, resolve_seed
from .pipeline import run_pipeline
from .significance import placebo_suite

log = logging.getLogger("geordd")


def _csv_list(s):
    return [x.strip() for x in s.split(",") if x.strip()]


def _common(p):
    p.add_argument("--config", help="JSON or YAML config file")
    p.add_argument("--units", help="units CSV (x,y,outcome[,region][,covariates])")
    p.add_argument("--border", help="border GeoJSON LineString or vertex CSV")
    p.add_argument("--regions", help="region polygons GeoJSON")
    p.add_argument("--theta", help="fixed hyperparameters: lengthscale,gp_scale,noise"
                                   "[,mean_scale[,beta_scale]]")
    p.add_argument("--R", type=int, help="number of sentinels")
    p.add_argument("--B", type=int, help="bootstrap draws")
    p.add_argument("--delta", type=float, help="buffer distance for projection schemes")
    p.add_argument("--nu", type=float, help="grid spacing for GEO and POP")
    p.add_argument("--schemes", type=_csv_list, help="comma list of UNIF,RHO,INV,PROJ,GEO,POP")
    p.add_argument("--tests", type=_csv_list,
                   help="comma list of INV_ANALYTIC,INV_UNCALIBRATED,INV,MLL,CHI2")
    p.add_argument("--seed", type=int, help="RNG seed (falls back to $GEORDD_SEED)")
    p.add_argument("--log-outcome", action="store_true", default=None)
    p.add_argument("--full-covariance", action="store_true", default=None)
    p.add_argument("--n-jobs", type=int)
    p.add_argument("--out", default=".", help="output directory")


def _config(args):
    cfg = load_config(args.config) if args.config else AnalysisConfig()
    theta = None
    if args.theta:
        vals = [float(v) for v in _csv_list(args.theta)]
        names = ("lengthscale", "gp_scale", "noise", "mean_scale", "beta_scale")
        if not 3 <= len(vals) <= 5:
            raise ValueError("--theta takes 3 to 5 comma-separated numbers")
        theta = dict(zip(names, vals))
    over = dict(units=args.units, border=args.border, regions=args.regions, theta=theta,
                R=args.R, B=args.B, delta=args.delta, nu=args.nu, schemes=args.schemes,
                tests=args.tests, seed=args.seed, log_outcome=args.log_outcome,
                full_covariance=args.full_covariance, n_jobs=args.n_jobs)
    for k in ("units", "border", "regions"):
        # command-line paths are relative to the working directory
        if over[k] is not None:
            over[k] = str(Path(over[k]).resolve())
    return cfg.replace(**over)


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)


def cmd_analysis(args):
    cfg = _config(args)
    stage = {"fit": "fit", "cliff": "cliff", "late": "late", "test": None}[args.command]
    if args.command != "test":
        cfg = cfg.replace(tests=[])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = run_pipeline(cfg, stop_after=stage)
    if args.command == "fit":
        _write_json(out / "theta.json", report.theta)
        print(json.dumps(report.theta, sort_keys=True))
        return 0
    report.write(out / "report.json")
    report.write_sentinel_csv(out / "sentinels.csv")
    if report.covariance is not None:
        np.savetxt(out / "covariance.csv", np.asarray(report.covariance), fmt="%.17g",
                   delimiter=",")
    if report.late:
        report.write_late_csv(out / "late.csv")
        for r in report.late:
            print(f"{r['scheme']:5s} mean={r['mean']:.4g} sd={r['sd']:.4g} "
                  f"Pr(tau>0)={r['tail_prob']:.4g}")
    if report.tests:
        _write_json(out / "tests.json", report.tests)
        for t in report.tests:
            print(f"{t['method']:17s} statistic={t['statistic']:.4g} p={t['p_value']:.4g}")
    return 0


def cmd_placebo(args):
    cfg = _config(args)
    seed = resolve_seed(cfg.seed, required=args.statistic != "INV_ANALYTIC")
    ds = load_dataset(cfg)
    region = ds.treatment if args.region == "treatment" else ds.control
    report = run_pipeline(cfg.replace(tests=[]), dataset=ds, stop_after="fit")
    theta = Hyperparams(**report.theta)
    angles = np.arange(args.angle_step, 180 + 1e-9, args.angle_step)
    res = placebo_suite(region, theta, angles, args.statistic, cfg.B,
                        0 if seed is None else seed, cfg.R, cfg.n_jobs or 1)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res.to_csv(out / "placebo.csv")
    d = res.to_dict()
    d["seed"] = seed
    _write_json(out / "placebo.json", d)
    print(f"{len(angles)} angles, {len(res.failures)} failed, "
          f"fraction p<0.05: {res.rejection_rate():.3f}")
    print(res.note)
    return 1 if len(res.failures) == len(angles) else 0


def cmd_simulate(args):
    from . import sims

    seed = resolve_seed(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.sim == "confounding":
        res = sims.sim_confounding(alpha=args.alpha, n=args.n, sigma_eps=args.sigma_eps,
                                   seed=seed, h=args.h)
    elif args.sim == "wiggly":
        res = sims.sim_wiggly(sims.WigglyScenario(noise=args.sigma_eps), args.n_sims, seed)
    else:
        res = sims.sim_power(args.tau, args.n_sims, seed=seed, B=args.B,
                             n_jobs=args.n_jobs)
    res.to_csv(out / f"{args.sim}.csv")
    res.write_metadata(out / f"{args.sim}.json")
    print(",".join(res.columns))
    for r in res.rows:
        print(",".join(f"{v:.4g}" if isinstance(v, float) else str(v) for v in r))
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="geordd", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("fit", "fit hyperparameters"),
                        ("cliff", "posterior of the effect along the border"),
                        ("late", "weighted average effects"),
                        ("test", "tests of zero effect")):
        p = sub.add_parser(name, help=help_)
        _common(p)
        p.set_defaults(func=cmd_analysis)
    p = sub.add_parser("placebo", help="placebo borders within one region")
    _common(p)
    p.add_argument("--region", choices=("treatment", "control"), default="control")
    p.add_argument("--statistic", default="INV_ANALYTIC",
                   choices=("INV_ANALYTIC", "INV", "MLL", "CHI2"))
    p.add_argument("--angle-step", type=float, default=1.0)
    p.set_defaults(func=cmd_placebo)

    p = sub.add_parser("simulate", help="run a simulation study")
    p.add_argument("sim", choices=("confounding", "wiggly", "power"))
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=".")
    p.add_argument("--n-sims", type=int, default=500)
    p.add_argument("--alpha", type=float, default=3.0, help="confounding trend slope")
    p.add_argument("--n", type=int, default=20000, help="confounding sample size")
    p.add_argument("--h", type=float, default=1.0, help="1D RDD bandwidth")
    p.add_argument("--sigma-eps", type=float, default=0.1)
    p.add_argument("--tau", type=float, default=1.2, help="power-study effect size")
    p.add_argument("--B", type=int, default=500)
    p.add_argument("--n-jobs", type=int, default=1)
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (GeoRDDError, ValueError, OSError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

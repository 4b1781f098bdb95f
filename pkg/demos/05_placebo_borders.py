"""Placebo borders inside one region.

There is no border inside the control district, so splitting it along
arbitrary lines should give p-values that look roughly uniform. Nearby
angles give almost the same split, so the p-values are strongly correlated
and the histogram is only a visual check.

    python demos/05_placebo_borders.py
"""
from pathlib import Path

import numpy as np

from geordd.gp import Hyperparams
from geordd.io import load_config, load_dataset
from geordd.significance import placebo_suite

CONFIG = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "two_district" / "config.yaml"

cfg = load_config(CONFIG)
ds = load_dataset(cfg)
theta = Hyperparams(**cfg.theta)
# placebo splits ignore covariates; the control district alone is used
res = placebo_suite(ds.control, theta, angles=np.arange(5, 181, 5.0), R=50)
counts, edges = res.histogram(bins=5)
for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
    print(f"p in [{lo:.1f}, {hi:.1f}): {'#' * int(c)}")
print(f"fraction below 0.05: {res.rejection_rate():.3f}")
print(res.note)

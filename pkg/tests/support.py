"""Shared generators for the test modules."""
import numpy as np

from geordd.cliff import RegionData
from geordd.geometry import Border, place_sentinels
from geordd.gp import Hyperparams


def random_instance(rng, n_max=12, R_max=6, p=0):
    """Small random two-region problem with a straight vertical border."""
    n_T = int(rng.integers(1, n_max // 2 + 1))
    n_C = int(rng.integers(1, n_max // 2 + 1))
    R = int(rng.integers(1, R_max + 1))
    X_T = np.column_stack([rng.uniform(0.05, 2, n_T), rng.uniform(-1, 1, n_T)])
    X_C = np.column_stack([rng.uniform(-2, -0.05, n_C), rng.uniform(-1, 1, n_C)])
    Y_T = rng.normal(size=n_T)
    Y_C = rng.normal(size=n_C)
    D_T = rng.normal(size=(n_T, p)) if p else None
    D_C = rng.normal(size=(n_C, p)) if p else None
    theta = Hyperparams(
        lengthscale=float(rng.uniform(0.3, 2.0)),
        gp_scale=float(rng.uniform(0.3, 2.0)),
        noise=float(rng.uniform(0.1, 1.0)),
        mean_scale=float(rng.uniform(0.5, 5.0)),
        beta_scale=float(rng.uniform(0.2, 2.0)) if p else 0.0,
    )
    border = Border([(0.0, -1.2), (0.0, 1.2)])
    sent = place_sentinels(border, R)
    return (RegionData(X_T, Y_T, D_T, "treatment"), RegionData(X_C, Y_C, D_C, "control"),
            sent, theta)

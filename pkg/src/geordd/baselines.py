"""
Projected one-dimensional regression discontinuity baseline.

Every unit is reduced to its signed distance from the border (positive on
the treatment side) and a local linear regression with a triangular kernel
is fitted on each side. The estimate is the difference of the two fitted
intercepts at distance zero.
"""
from dataclasses import dataclass

import numpy as np

from .exceptions import DataError
from .geometry import project_points

__all__ = ["Sim1DRDD", "projected_1d_rdd", "local_linear_weights", "triangular_kernel"]


def triangular_kernel(x, h):
    return np.clip(1.0 - np.abs(x) / h, 0.0, None)


@dataclass(frozen=True, eq=False)
class Sim1DRDD:
    """A projected 1D design: signed distances with their outcomes.

    Attributes
    ----------
    x : ndarray
        Signed distance to the border, positive on the treatment side.
    y : ndarray
    h : float
        Triangular kernel bandwidth.
    """

    x: np.ndarray
    y: np.ndarray
    h: float

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"bandwidth must be positive, got {self.h}")

    @property
    def treated(self):
        return self.x > 0

    def estimate(self):
        t = self.treated
        w_T = local_linear_weights(self.x[t], self.h)
        w_C = local_linear_weights(self.x[~t], self.h)
        return float(w_T @ self.y[t] - w_C @ self.y[~t])


def local_linear_weights(x, h):
    """Weights ``X_b (X^T W X)^{-1} X^T W`` of the local linear fit at 0.

    The returned vector sums to one and vanishes outside the kernel support.
    """
    x = np.asarray(x, dtype=float)
    k = triangular_kernel(x, h)
    X = np.column_stack([np.ones_like(x), x])
    A = X.T @ (k[:, None] * X)
    if np.count_nonzero(k) < 2 or np.linalg.cond(A) > 1e12:
        raise DataError(
            f"local linear design is singular: {np.count_nonzero(k)} units within "
            f"bandwidth {h}"
        )
    coef = np.linalg.solve(A, X.T * k)
    return coef[0]


def projected_1d_rdd(data_T, data_C, border, h):
    """Projected 1D RDD estimate and its unit weights.

    Returns
    -------
    estimate : float
    (w_T, w_C) : tuple of ndarray
        ``estimate == w_T @ Y_T + w_C @ Y_C``; ``w_T`` sums to 1 and ``w_C``
        to -1.
    """
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    _, d_T, _ = project_points(border, data_T.locations)
    _, d_C, _ = project_points(border, data_C.locations)
    w_T = local_linear_weights(d_T, h)
    w_C = -local_linear_weights(-d_C, h)
    est = float(w_T @ data_T.outcomes + w_C @ data_C.outcomes)
    return est, (w_T, w_C)

"""
Weighted local average treatment effects along the border.

Any nonnegative (or, for inverse-variance weights, signed) weight vector on
points of the border turns the multivariate normal cliff posterior into a
univariate normal posterior for the weighted mean effect. This module
implements that reduction, the six named weighting schemes, the induced
weights on the observed outcomes, and a Gaussian kernel density estimator.
"""
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import norm

from .cliff import SideFit, _points
from .exceptions import DataError
from .geometry import BufferGrid, buffer_grid, project_points
from .gp import cov_matrix, jitter_cholesky

__all__ = [
    "Scheme",
    "SCHEME_ORDER",
    "BorderWeights",
    "LateResult",
    "weighted_late",
    "late_uniform",
    "late_inverse_variance",
    "late_density_weighted",
    "late_projected",
    "late_projected_grid",
    "unit_weights",
    "kde_density",
    "default_delta",
    "default_nu",
]


class Scheme(str, Enum):
    UNIF = "UNIF"
    RHO = "RHO"
    INV = "INV"
    PROJ = "PROJ"
    GEO = "GEO"
    POP = "POP"
    CUSTOM = "CUSTOM"


# reporting order for tables
SCHEME_ORDER = (Scheme.UNIF, Scheme.RHO, Scheme.INV, Scheme.PROJ, Scheme.GEO, Scheme.POP)

_NONNEGATIVE = {Scheme.UNIF, Scheme.RHO, Scheme.PROJ, Scheme.GEO, Scheme.POP}


def default_delta(theta):
    """Default buffer distance for the projection schemes: two lengthscales."""
    return 2.0 * theta.lengthscale


def default_nu(theta):
    """Default lattice spacing for the projected-grid schemes."""
    return theta.lengthscale / 5.0


@dataclass(frozen=True, eq=False)
class BorderWeights:
    """Weights on border points for one weighting scheme."""

    values: np.ndarray
    scheme: Scheme = Scheme.CUSTOM

    def __post_init__(self):
        w = np.asarray(self.values, dtype=float).ravel()
        scheme = Scheme(self.scheme)
        if w.size == 0 or not np.all(np.isfinite(w)):
            raise ValueError("weights must be a non-empty finite vector")
        if not np.any(w != 0):
            raise ValueError("weights are all zero")
        if scheme in _NONNEGATIVE and np.any(w < 0):
            raise ValueError(f"{scheme.value} weights must be nonnegative")
        object.__setattr__(self, "values", w)
        object.__setattr__(self, "scheme", scheme)

    @property
    def total(self):
        return float(self.values.sum())


@dataclass(frozen=True, eq=False)
class LateResult:
    """Normal posterior of one weighted LATE.

    ``tail_prob`` is ``Pr(tau > 0 | Y) = Phi(mean / sd)``. ``weights`` are the
    normalized weights on ``points`` and ``unit_weights`` the pair
    ``(w_T, w_C)`` with ``mean = w_T @ Y_T + w_C @ Y_C`` (when available).
    """

    scheme: Scheme
    mean: float
    var: float
    weights: np.ndarray = field(repr=False, default=None)
    points: np.ndarray = field(repr=False, default=None)
    unit_weights: tuple = field(repr=False, default=None)

    @property
    def sd(self):
        return float(np.sqrt(self.var))

    @property
    def tail_prob(self):
        return float(norm.cdf(self.mean / self.sd))

    def to_dict(self):
        return {
            "scheme": Scheme(self.scheme).value,
            "mean": float(self.mean),
            "sd": self.sd,
            "tail_prob": self.tail_prob,
        }


def _as_weights(w, R, scheme=Scheme.CUSTOM):
    if not isinstance(w, BorderWeights):
        w = BorderWeights(w, scheme)
    if w.values.shape[0] != R:
        raise ValueError(f"{w.values.shape[0]} weights for {R} border points")
    return w


def _normalizer(w):
    s = w.total
    if abs(s) <= 1e-300 or abs(s) <= 1e-14 * np.abs(w.values).sum():
        raise ValueError("weights sum to zero; the weighted mean is undefined")
    return s


def weighted_late(cliff, w, unit_weights=None):
    """Posterior of ``w^T tau / w^T 1`` under the cliff posterior.

    Returns a normal posterior with mean ``w^T mu / w^T 1`` and variance
    ``w^T Sigma w / (w^T 1)**2``.

    Examples
    --------
    >>> import numpy as np
    >>> from geordd.cliff import CliffPosterior
    >>> c = CliffPosterior(np.zeros((2, 2)), np.array([0.0, 2.0]), np.eye(2))
    >>> r = weighted_late(c, np.ones(2))
    >>> float(r.mean), float(r.var)
    (1.0, 0.5)
    """
    w = _as_weights(w, cliff.R)
    s = _normalizer(w)
    v = w.values / s
    var = float(v @ cliff.cov @ v)
    if not var > 0:
        raise ValueError(f"posterior variance {var} is not positive")
    return LateResult(w.scheme, float(v @ cliff.mean), var, v, cliff.points, unit_weights)


def late_uniform(cliff):
    return weighted_late(cliff, BorderWeights(np.ones(cliff.R), Scheme.UNIF))


def inverse_variance_weights(cov):
    """``Sigma^{-1} 1`` (with the jitter ladder if ``Sigma`` is near singular)."""
    return jitter_cholesky(cov).solve(np.ones(cov.shape[0]))


def late_inverse_variance(cliff):
    """Minimum-variance weighted LATE, with weights ``Sigma^{-1} 1``."""
    w = inverse_variance_weights(cliff.cov)
    return weighted_late(cliff, BorderWeights(w, Scheme.INV))


def late_density_weighted(cliff, density):
    """LATE with border weights equal to the unit density at each sentinel.

    The density is treated as known; its estimation uncertainty is not
    propagated.
    """
    rho = np.asarray(density, dtype=float).ravel()
    if np.any(rho < 0):
        raise ValueError("density must be nonnegative")
    if not np.any(rho > 0):
        raise ValueError("density is zero at every sentinel")
    return weighted_late(cliff, BorderWeights(rho, Scheme.RHO))


def unit_weights(data_T, data_C, sentinels, theta, w):
    """Coefficients on the observed outcomes implied by a weighted LATE.

    ``w_T = Sigma_TT^{-1} K_BT^T w / w^T 1`` and
    ``w_C = -Sigma_CC^{-1} K_BC^T w / w^T 1``, so that the posterior mean of
    the LATE is ``w_T @ Y_T + w_C @ Y_C``.
    """
    pts = _points(sentinels)
    w = _as_weights(w, len(pts))
    v = w.values / _normalizer(w)
    side_T = SideFit(data_T, pts, theta)
    side_C = SideFit(data_C, pts, theta)
    return v @ side_T.W, -(v @ side_C.W)


def _quad_kernel_sum(P, v, theta, chunk=2048):
    """``v^T K_PP v`` without forming the full matrix."""
    total = 0.0
    for i in range(0, len(P), chunk):
        total += v[i:i + chunk] @ (cov_matrix(P[i:i + chunk], P, theta) @ v)
    return float(total)


def _average_at_points(data_T, data_C, P, v, theta, scheme, chunk=2048):
    """Weighted-mean posterior over arbitrary border points ``P``.

    Works with the aggregated kernel vectors ``K_XP v`` so that the
    (possibly large) posterior covariance at ``P`` is never formed.
    """
    s = _normalizer(BorderWeights(v, Scheme.CUSTOM))
    v = v / s
    out = []
    var = _quad_kernel_sum(P, v, theta, chunk) * 2.0
    for data in (data_T, data_C):
        Sigma = cov_matrix(data.locations, data.locations, theta)
        Sigma[np.diag_indices_from(Sigma)] += theta.noise**2
        f = jitter_cholesky(Sigma)
        k = np.zeros(data.n)
        for i in range(0, len(P), chunk):
            k += cov_matrix(data.locations, P[i:i + chunk], theta) @ v[i:i + chunk]
        u = f.solve(k)
        var -= float(k @ u)
        out.append(u)
    w_T, w_C = out[0], -out[1]
    mean = float(w_T @ data_T.outcomes + w_C @ data_C.outcomes)
    if not var > 0:
        raise ValueError(f"posterior variance {var} is not positive")
    return LateResult(scheme, mean, var, v, P, (w_T, w_C))


def late_projected(data_T, data_C, border, theta, delta=None):
    """Average effect at the border projections of the units within ``delta``.

    Units from both regions are projected onto their nearest border point;
    the cliff posterior is evaluated at those projections (coincident
    projections are kept with multiplicity) and averaged with equal weights.
    ``delta`` defaults to two lengthscales; ``np.inf`` keeps every unit.
    """
    if delta is None:
        delta = default_delta(theta)
    X = np.vstack([data_T.locations, data_C.locations])
    proj, dist, _ = project_points(border, X)
    keep = dist <= delta
    if not np.any(keep):
        raise DataError(f"no unit lies within {delta} of the border")
    P = proj[keep]
    return _average_at_points(data_T, data_C, P, np.ones(len(P)), theta, Scheme.PROJ)


def late_projected_grid(data_T, data_C, border, region_polygons, theta, delta=None,
                        nu=None, density=None, grid=None):
    """Average effect at the border projections of a lattice near the border.

    Without ``density`` every lattice point counts equally (the projected
    land LATE). With ``density`` (a callable on ``(m, 2)`` points or an array
    aligned with the lattice) the points are weighted by it (the projected
    superpopulation LATE).
    """
    if grid is None:
        if delta is None:
            delta = default_delta(theta)
        if nu is None:
            nu = default_nu(theta)
        grid = buffer_grid(region_polygons, border, delta, nu)
    G = grid.points if isinstance(grid, BufferGrid) else np.asarray(grid, dtype=float)
    P, _, _ = project_points(border, G)
    if density is None:
        return _average_at_points(data_T, data_C, P, np.ones(len(P)), theta, Scheme.GEO)
    rho = density(G) if callable(density) else density
    rho = np.asarray(rho, dtype=float).ravel()
    if rho.shape[0] != len(G):
        raise ValueError(f"{rho.shape[0]} density values for {len(G)} grid points")
    w = BorderWeights(rho, Scheme.POP)
    return _average_at_points(data_T, data_C, P, w.values, theta, Scheme.POP)


def kde_density(points, eval_at, bandwidth, chunk=4096):
    """Two-dimensional Gaussian kernel density estimate.

    ``(1 / (n 2 pi h^2)) sum_i exp(-|x - x_i|^2 / (2 h^2))``, which integrates
    to one over the plane.

    Examples
    --------
    >>> import numpy as np
    >>> float(kde_density([[0, 0]], [[0, 0]], 1.0)[0]) == 1 / (2 * np.pi)
    True
    """
    X = np.asarray(points, dtype=float).reshape(-1, 2)
    E = np.asarray(eval_at, dtype=float).reshape(-1, 2)
    if len(X) == 0:
        raise ValueError("need at least one point")
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    out = np.empty(len(E))
    for i in range(0, len(E), chunk):
        d2 = cdist(E[i:i + chunk], X, "sqeuclidean")
        out[i:i + chunk] = np.exp(-d2 / (2 * bandwidth**2)).sum(axis=1)
    return out / (len(X) * 2 * np.pi * bandwidth**2)

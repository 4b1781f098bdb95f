"""
Posterior of the treatment effect ("cliff height") along the border.

Each side of the border gets an independent intercept-plus-GP surface. Both
surfaces are extrapolated to the sentinels and their difference is the
treatment effect. Non-spatial covariates enter either jointly (which couples
the two regions) or through a plug-in residualization on the posterior mean
of the coefficients.
"""
from dataclasses import dataclass, replace

import numpy as np

from .geometry import SentinelSet
from .gp import cov_matrix, jitter_cholesky

__all__ = [
    "RegionData",
    "CliffPosterior",
    "SideFit",
    "fit_side",
    "cliff_posterior",
    "cliff_posterior_with_covariates",
    "estimate_beta",
    "residualize",
    "dummy_encode",
]


@dataclass(frozen=True, eq=False)
class RegionData:
    """Units observed in one region.

    Attributes
    ----------
    locations : ndarray, shape (n, 2)
    outcomes : ndarray, shape (n,)
    covariates : ndarray, shape (n, p), optional
    label : str
        ``"treatment"``, ``"control"``, or any region name.
    """

    locations: np.ndarray
    outcomes: np.ndarray
    covariates: np.ndarray = None
    label: str = "region"

    def __post_init__(self):
        X = np.asarray(self.locations, dtype=float).reshape(-1, 2)
        y = np.asarray(self.outcomes, dtype=float).ravel()
        if len(X) != len(y):
            raise ValueError(f"{len(X)} locations but {len(y)} outcomes")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError(f"region {self.label!r} has non-finite locations or outcomes")
        object.__setattr__(self, "locations", X)
        object.__setattr__(self, "outcomes", y)
        if self.covariates is not None:
            D = np.asarray(self.covariates, dtype=float)
            if D.ndim == 1:
                D = D[:, None]
            if D.shape[0] != len(y):
                raise ValueError(f"covariates have {D.shape[0]} rows, expected {len(y)}")
            if not np.all(np.isfinite(D)):
                raise ValueError(f"region {self.label!r} has non-finite covariates")
            object.__setattr__(self, "covariates", D)

    @property
    def n(self):
        return len(self.outcomes)

    @property
    def p(self):
        return 0 if self.covariates is None else self.covariates.shape[1]

    def with_outcomes(self, y):
        return replace(self, outcomes=y)

    def subset(self, idx, label=None):
        D = None if self.covariates is None else self.covariates[idx]
        return RegionData(self.locations[idx], self.outcomes[idx], D,
                          self.label if label is None else label)


@dataclass(frozen=True, eq=False)
class CliffPosterior:
    """Multivariate normal posterior of the treatment effect at ``points``.

    ``sentinels`` is set when the points are evenly spaced border sentinels.
    """

    points: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    sentinels: SentinelSet = None

    @property
    def R(self):
        return len(self.mean)

    @property
    def sd(self):
        return np.sqrt(np.clip(np.diag(self.cov), 0, None))


def _points(sentinels):
    if isinstance(sentinels, SentinelSet):
        return sentinels.points
    return np.asarray(sentinels, dtype=float).reshape(-1, 2)


class SideFit:
    """Cached quantities for extrapolating one region's surface to points.

    ``W`` maps that region's outcomes to the posterior mean at the points
    (``K_BX Sigma_XX^{-1}``) and ``cov`` is the posterior covariance, which
    does not depend on the outcomes.
    """

    def __init__(self, data, points, theta, factor=None):
        self.data = data
        self.points = points
        self.theta = theta
        Sigma = cov_matrix(data.locations, data.locations, theta)
        Sigma[np.diag_indices_from(Sigma)] += theta.noise**2
        self.factor = factor if factor is not None else jitter_cholesky(Sigma)
        K_BX = cov_matrix(points, data.locations, theta)
        self.K_BX = K_BX
        self.W = self.factor.solve(K_BX.T).T
        V = self.factor.half_solve(K_BX.T)
        S = cov_matrix(points, points, theta) - V.T @ V
        self.cov = 0.5 * (S + S.T)

    def mean(self, y=None):
        y = self.data.outcomes if y is None else y
        return self.W @ y


def fit_side(data, sentinels, theta):
    return SideFit(data, _points(sentinels), theta)


def cliff_posterior(data_T, data_C, sentinels, theta):
    """Posterior of ``tau`` at the sentinels for covariate-free data.

    The mean is the difference of the two one-sided posterior means and the
    covariance is the sum of the two one-sided posterior covariances.
    """
    pts = _points(sentinels)
    side_T = SideFit(data_T, pts, theta)
    side_C = SideFit(data_C, pts, theta)
    return CliffPosterior(
        points=pts,
        mean=side_T.mean() - side_C.mean(),
        cov=side_T.cov + side_C.cov,
        sentinels=sentinels if isinstance(sentinels, SentinelSet) else None,
    )


def _joint_cov(data_T, data_C, theta):
    X = np.vstack([data_T.locations, data_C.locations])
    n_T = data_T.n
    S = cov_matrix(X, X, theta)
    S[:n_T, n_T:] = 0.0
    S[n_T:, :n_T] = 0.0
    S[np.diag_indices_from(S)] += theta.noise**2
    return S


def cliff_posterior_with_covariates(data_T, data_C, sentinels, theta):
    """Cliff posterior with a shared linear term on covariates, jointly.

    ``Sigma_Y = blockdiag(Sigma_TT, Sigma_CC) + beta_scale**2 D D^T``; the mean
    is ``G Sigma_Y^{-1} Y`` and the covariance ``2 K_BB - G Sigma_Y^{-1} G^T``
    with ``G = [K_BT, -K_BC]``.
    """
    if data_T.covariates is None or data_C.covariates is None:
        raise ValueError("both regions must carry covariates")
    if data_T.p != data_C.p:
        raise ValueError(
            f"treatment has {data_T.p} covariate columns, control has {data_C.p}"
        )
    pts = _points(sentinels)
    D = np.vstack([data_T.covariates, data_C.covariates])
    y = np.concatenate([data_T.outcomes, data_C.outcomes])
    S = _joint_cov(data_T, data_C, theta) + theta.beta_scale**2 * (D @ D.T)
    G = np.hstack([cov_matrix(pts, data_T.locations, theta),
                   -cov_matrix(pts, data_C.locations, theta)])
    f = jitter_cholesky(S)
    V = f.half_solve(G.T)
    cov = 2 * cov_matrix(pts, pts, theta) - V.T @ V
    return CliffPosterior(
        points=pts,
        mean=G @ f.solve(y),
        cov=0.5 * (cov + cov.T),
        sentinels=sentinels if isinstance(sentinels, SentinelSet) else None,
    )


def estimate_beta(regions, theta):
    """Posterior mean of the covariate coefficients and per-region residuals.

    Regions are stacked; given the coefficients their GPs are independent.
    Uses ``beta_hat = (I / beta_scale**2 + D^T Bd^{-1} D)^{-1} D^T Bd^{-1} Y``,
    which equals ``beta_scale**2 D^T Sigma_Y^{-1} Y`` by the Woodbury identity.

    Returns
    -------
    beta_hat : ndarray, shape (p,)
    residuals : list of RegionData
        Copies of ``regions`` with outcomes ``Y - D beta_hat`` and no covariates.
    """
    regions = list(regions)
    if any(r.covariates is None for r in regions):
        raise ValueError("every region must carry covariates")
    p = regions[0].p
    if p == 0:
        raise ValueError("no covariates (p = 0)")
    if any(r.p != p for r in regions):
        raise ValueError("regions disagree on the number of covariate columns")
    if theta.beta_scale == 0:
        beta = np.zeros(p)
    else:
        M = np.eye(p) / theta.beta_scale**2
        u = np.zeros(p)
        for r in regions:
            S = cov_matrix(r.locations, r.locations, theta)
            S[np.diag_indices_from(S)] += theta.noise**2
            f = jitter_cholesky(S)
            M += r.covariates.T @ f.solve(r.covariates)
            u += r.covariates.T @ f.solve(r.outcomes)
        beta = jitter_cholesky(M).solve(u)
    return beta, residualize(regions, beta)


def residualize(regions, beta):
    return [
        RegionData(r.locations, r.outcomes - r.covariates @ beta, None, r.label)
        for r in regions
    ]


def dummy_encode(values):
    """One indicator column per distinct level, levels in sorted order.

    No reference level is dropped; the coefficient prior handles the
    collinearity with the intercepts.
    """
    values = np.asarray(values)
    levels = np.unique(values)
    return (values[:, None] == levels[None, :]).astype(float), levels

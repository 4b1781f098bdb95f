"""
Squared-exponential Gaussian process machinery.

Covariance assembly for the two-region model (independent intercept plus
independent GP on each side of the border), Cholesky-based multivariate
normal conditioning, the log marginal likelihood, and empirical-Bayes
hyperparameter fitting.
"""
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg, optimize
from scipy.spatial.distance import cdist

from .exceptions import LinAlgError, OptimizationError

__all__ = [
    "Hyperparams",
    "CovMatrices",
    "Factor",
    "sqexp_kernel",
    "kernel_matrix",
    "cov_matrix",
    "jitter_cholesky",
    "assemble_covariances",
    "mvn_condition",
    "log_marginal_likelihood",
    "region_log_likelihood",
    "fit_hyperparams",
]

LOG_2PI = np.log(2 * np.pi)

# jitter ladder, as multiples of mean(diag(A))
JITTER_START = 1e-10
JITTER_MAX = 1e-4


@dataclass(frozen=True)
class Hyperparams:
    """Kernel and noise scales.

    Attributes
    ----------
    lengthscale : float
        Squared-exponential lengthscale (coordinate units).
    gp_scale : float
        Marginal standard deviation of the spatial GP.
    noise : float
        Standard deviation of the iid observation noise.
    mean_scale : float
        Prior standard deviation of each region's intercept.
    beta_scale : float
        Prior standard deviation of the covariate coefficients; 0 when the
        model carries no non-spatial covariates.
    """

    lengthscale: float
    gp_scale: float
    noise: float
    mean_scale: float = 20.0
    beta_scale: float = 0.0

    def __post_init__(self):
        for name in ("lengthscale", "gp_scale", "mean_scale"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        for name in ("noise", "beta_scale"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be non-negative and finite, got {v}")

    def scaled(self, c):
        """Hyperparameters for outcomes multiplied by ``c``."""
        c = abs(float(c))
        return replace(
            self,
            gp_scale=self.gp_scale * c,
            noise=self.noise * c,
            mean_scale=self.mean_scale * c,
            beta_scale=self.beta_scale * c,
        )

    def to_dict(self):
        return {
            "lengthscale": float(self.lengthscale),
            "gp_scale": float(self.gp_scale),
            "noise": float(self.noise),
            "mean_scale": float(self.mean_scale),
            "beta_scale": float(self.beta_scale),
        }


def sqexp_kernel(s, s_prime, theta):
    """``gp_scale**2 * exp(-|s - s'|**2 / (2 lengthscale**2))`` for one pair."""
    d = np.asarray(s, dtype=float) - np.asarray(s_prime, dtype=float)
    return theta.gp_scale**2 * np.exp(-float(d @ d) / (2 * theta.lengthscale**2))


def kernel_matrix(X1, X2, theta):
    """Squared-exponential kernel between two point sets."""
    d2 = cdist(np.atleast_2d(X1), np.atleast_2d(X2), "sqeuclidean")
    return theta.gp_scale**2 * np.exp(-d2 / (2 * theta.lengthscale**2))


def cov_matrix(X1, X2, theta):
    """Intercept-plus-GP covariance ``mean_scale**2 + k(x, x')`` (no noise)."""
    return theta.mean_scale**2 + kernel_matrix(X1, X2, theta)


def _noisy_cov(X, theta):
    K = cov_matrix(X, X, theta)
    K[np.diag_indices_from(K)] += theta.noise**2
    return K


class Factor:
    """Cholesky factor of a symmetric positive-definite matrix.

    ``jitter`` records the amount added to the diagonal, 0 if none was needed.
    """

    def __init__(self, lower, jitter=0.0):
        self.lower = lower
        self.jitter = jitter

    @property
    def n(self):
        return self.lower.shape[0]

    def solve(self, b):
        return linalg.cho_solve((self.lower, True), b, check_finite=False)

    def half_solve(self, b):
        """``L^{-1} b``."""
        return linalg.solve_triangular(self.lower, b, lower=True, check_finite=False)

    def logdet(self):
        return 2.0 * np.sum(np.log(np.diag(self.lower)))


def jitter_cholesky(A):
    """Cholesky factor of ``A``, adding diagonal jitter only if needed.

    The plain factorization is tried first. On failure the diagonal is
    inflated by ``1e-10 * mean(diag(A))``, escalating tenfold up to
    ``1e-4 * mean(diag(A))``.
    """
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise LinAlgError("matrix has non-finite entries")
    try:
        return Factor(linalg.cholesky(A, lower=True, check_finite=False))
    except linalg.LinAlgError:
        pass
    diag_mean = float(np.mean(np.diag(A)))
    if not diag_mean > 0:
        raise LinAlgError(f"matrix diagonal mean is {diag_mean}; not positive definite")
    level = JITTER_START
    eye = np.eye(A.shape[0])
    while level <= JITTER_MAX * (1 + 1e-9):
        jitter = level * diag_mean
        try:
            return Factor(
                linalg.cholesky(A + jitter * eye, lower=True, check_finite=False),
                jitter,
            )
        except linalg.LinAlgError:
            level *= 10
    w = np.linalg.eigvalsh((A + A.T) / 2)
    raise LinAlgError(
        f"Cholesky failed after jitter {JITTER_MAX * diag_mean:.3g}; "
        f"n={A.shape[0]}, eigenvalue range [{w[0]:.3g}, {w[-1]:.3g}], "
        f"mean diagonal {diag_mean:.3g}"
    )


@dataclass(frozen=True, eq=False)
class CovMatrices:
    """Covariance blocks for treatment (T), control (C) and sentinels (B).

    ``Sigma_TT`` and ``Sigma_CC`` include the noise variance on the diagonal.
    ``K_TC`` is the treatment-control cross-covariance under the null model
    of a single GP (with shared intercept) spanning both regions.
    """

    Sigma_TT: np.ndarray
    Sigma_CC: np.ndarray
    K_BT: np.ndarray
    K_BC: np.ndarray
    K_BB: np.ndarray
    K_TC: np.ndarray


def _check_finite(X, name):
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite coordinates")
    return X


def assemble_covariances(X_T, X_C, B, theta):
    """Covariance blocks between unit locations ``X_T``, ``X_C`` and points ``B``."""
    X_T = _check_finite(X_T, "treatment locations")
    X_C = _check_finite(X_C, "control locations")
    B = _check_finite(B, "sentinels")
    if len(X_T) == 0 or len(X_C) == 0:
        raise ValueError("both regions need at least one unit")
    return CovMatrices(
        Sigma_TT=_noisy_cov(X_T, theta),
        Sigma_CC=_noisy_cov(X_C, theta),
        K_BT=cov_matrix(B, X_T, theta),
        K_BC=cov_matrix(B, X_C, theta),
        K_BB=cov_matrix(B, B, theta),
        K_TC=cov_matrix(X_T, X_C, theta),
    )


def mvn_condition(A, C, B, y, factor=None):
    """Condition a zero-mean Gaussian on observations.

    For a joint ``(targets, obs)`` with ``cov(obs) = A``, ``cov(targets, obs)
    = C`` and ``cov(targets) = B``, returns the posterior mean ``C A^{-1} y``
    and covariance ``B - C A^{-1} C^T`` (symmetrized).
    """
    if factor is None:
        factor = jitter_cholesky(A)
    C = np.atleast_2d(C)
    mu = C @ factor.solve(y)
    V = factor.half_solve(C.T)
    S = B - V.T @ V
    return mu, 0.5 * (S + S.T)


def log_marginal_likelihood(y, cov, factor=None):
    """Log density of ``y`` under ``N(0, cov)``, via Cholesky."""
    y = np.asarray(y, dtype=float)
    if factor is None:
        factor = jitter_cholesky(cov)
    z = factor.half_solve(y)
    return float(-0.5 * z @ z - 0.5 * factor.logdet() - 0.5 * len(y) * LOG_2PI)


def region_log_likelihood(regions, theta):
    """Joint log marginal likelihood of several independent regions.

    Each region has its own intercept and GP. With covariates, the shared
    coefficient vector couples the regions; the joint density is then
    evaluated with the Woodbury identity and the matrix determinant lemma so
    that only per-region factorizations are needed.
    """
    has_cov = [r.covariates is not None for r in regions]
    use_beta = all(has_cov) and theta.beta_scale > 0
    if any(has_cov) and not all(has_cov):
        raise ValueError("either all regions or none must carry covariates")
    total = 0.0
    if not use_beta:
        for r in regions:
            total += log_marginal_likelihood(r.outcomes, _noisy_cov(r.locations, theta))
        return total
    p = regions[0].covariates.shape[1]
    M = np.eye(p) / theta.beta_scale**2
    u = np.zeros(p)
    for r in regions:
        f = jitter_cholesky(_noisy_cov(r.locations, theta))
        a = f.solve(r.outcomes)
        SD = f.solve(r.covariates)
        total += -0.5 * r.outcomes @ a - 0.5 * f.logdet() - 0.5 * r.n * LOG_2PI
        M += r.covariates.T @ SD
        u += r.covariates.T @ a
    fm = jitter_cholesky(M)
    # y'S^-1 y = y'Bd^-1 y - u' M^-1 u ; log|S| = log|Bd| + log|M| + p log sb^2
    total += 0.5 * u @ fm.solve(u)
    total -= 0.5 * (fm.logdet() + p * np.log(theta.beta_scale**2))
    return float(total)


_FREE = ("lengthscale", "gp_scale", "noise")


def fit_hyperparams(datasets, theta_init, n_restarts=5, seed=0, fit_beta=None,
                    maxiter=2000):
    """Empirical-Bayes hyperparameters shared across regions.

    Maximizes the joint log marginal likelihood of ``datasets`` over the log
    lengthscale, GP scale and noise (and coefficient scale, when covariates
    are present), holding ``mean_scale`` fixed. Nelder-Mead is run from
    ``theta_init`` and from ``n_restarts`` starts perturbed uniformly by up to
    one log unit; the best point found is returned.
    """
    datasets = list(datasets)
    if not datasets or any(r.n == 0 for r in datasets):
        raise ValueError("every dataset must be non-empty")
    if fit_beta is None:
        fit_beta = all(r.covariates is not None for r in datasets)
    names = _FREE + (("beta_scale",) if fit_beta else ())
    init = theta_init
    if fit_beta and init.beta_scale <= 0:
        init = replace(init, beta_scale=1.0)
    if init.noise <= 0:
        init = replace(init, noise=1e-3 * init.gp_scale)
    x0 = np.log([getattr(init, k) for k in names])

    def unpack(x):
        return replace(init, **{k: float(v) for k, v in zip(names, np.exp(x))})

    def objective(x):
        if np.any(np.abs(x) > 50):
            return np.inf
        try:
            val = region_log_likelihood(datasets, unpack(x))
        except (LinAlgError, ValueError, FloatingPointError):
            return np.inf
        return -val if np.isfinite(val) else np.inf

    rng = np.random.default_rng(seed)
    starts = [x0] + [x0 + rng.uniform(-1, 1, size=len(x0)) for _ in range(n_restarts)]
    best_x, best_f = None, np.inf
    for start in starts:
        if not np.isfinite(objective(start)):
            continue
        res = optimize.minimize(
            objective, start, method="Nelder-Mead",
            options={"maxiter": maxiter, "xatol": 1e-6, "fatol": 1e-8},
        )
        if np.isfinite(res.fun) and res.fun < best_f:
            best_x, best_f = res.x, res.fun
    if best_x is None:
        raise OptimizationError("all optimizer starts produced a non-finite likelihood")
    return unpack(best_x)

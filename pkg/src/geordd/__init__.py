"""Gaussian-process regression discontinuity designs with geographic borders."""
__version__ = "0.1.0"

from .exceptions import (
    DataError,
    GeoRDDError,
    GeometryError,
    LinAlgError,
    OptimizationError,
    StageError,
)
from .geometry import (
    Border,
    BufferGrid,
    SentinelSet,
    buffer_grid,
    place_sentinels,
    project_points,
    project_to_border,
    split_by_angle,
)
from .gp import (
    CovMatrices,
    Hyperparams,
    assemble_covariances,
    fit_hyperparams,
    jitter_cholesky,
    log_marginal_likelihood,
    mvn_condition,
    sqexp_kernel,
)
from .cliff import (
    CliffPosterior,
    RegionData,
    cliff_posterior,
    cliff_posterior_with_covariates,
    dummy_encode,
    estimate_beta,
)
from .late import (
    BorderWeights,
    LateResult,
    Scheme,
    kde_density,
    late_density_weighted,
    late_inverse_variance,
    late_projected,
    late_projected_grid,
    late_uniform,
    unit_weights,
    weighted_late,
)
from .baselines import projected_1d_rdd
from . import significance
from .significance import NullModel, TestResult, chi2_statistic, mll_statistic

__all__ = [name for name in dir() if not name.startswith("_")]

"""Exception hierarchy."""


class GeoRDDError(Exception):
    """Base class for errors raised by this package."""


class GeometryError(GeoRDDError, ValueError):
    """Invalid or degenerate geometric input."""


class LinAlgError(GeoRDDError, ArithmeticError):
    """A covariance matrix could not be factorized even after jitter."""


class OptimizationError(GeoRDDError, RuntimeError):
    """Every hyperparameter optimization start failed."""


class DataError(GeoRDDError, ValueError):
    """Malformed input data (missing columns, empty regions, bad rows)."""


class StageError(GeoRDDError, RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")

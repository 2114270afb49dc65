"""Exception types raised across the package."""


class DecalError(Exception):
    """Base class for all package-specific errors."""


class InvalidDistributionError(DecalError, ValueError):
    """A probability vector has negative mass or does not sum to one."""


class SingularMatrixError(DecalError):
    """A matrix could not be Cholesky factorized even after the jitter ladder."""


class OptimizationError(DecalError):
    """Every hyperparameter optimization restart failed numerically."""


class DegenerateCandidateError(DecalError):
    """A candidate's predictive variance is at the numerical floor."""


class NoValidCandidateError(DecalError):
    """Every candidate score is non-finite; nothing can be selected."""


class ConfigError(DecalError, ValueError):
    """A configuration key is unknown, unreadable, or out of range."""


class DatasetFormatError(DecalError, ValueError):
    """A dataset CSV violates the documented schema."""

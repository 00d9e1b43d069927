"""Exception types raised across the package."""


class CrhdError(ValueError):
    """Base class for all errors raised by this package."""


class DegenerateDesignError(CrhdError):
    """Smoother design cannot be made non-singular (e.g. all times identical)."""


class InsufficientPairsError(CrhdError):
    """No off-diagonal raw covariance pairs; covariance surface cannot be fit."""


class EmptyDirectionSetError(CrhdError):
    """A regularization level accepted no directions from the pool."""


class UndefinedCorrelationError(CrhdError):
    """Correlation undefined because one input has zero variance."""


class SchemaError(CrhdError):
    """A file did not match the expected schema; message names the offending row."""

"""Exception types raised across the package.

Every error carries a human-readable message; some attach structured
attributes (iteration counts, field names, exclusion counts) so callers can
react programmatically instead of parsing strings.
"""


class TailQRError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(TailQRError, ValueError):
    """An argument violates a documented precondition."""


class DegenerateDesignError(TailQRError):
    """The augmented design matrix is rank deficient (no usable covariate
    variation), so regression coefficients are not identifiable."""


class SolverFailureError(TailQRError):
    """The quantile-regression solver failed or hit its iteration budget."""

    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class InvalidConfigError(TailQRError, ValueError):
    """A tail configuration is unusable for the given sample size."""


class InsufficientTailWidthError(InvalidConfigError):
    """k leaves fewer log-ratio terms than the enforced minimum."""


class TailDegeneracyError(TailQRError):
    """Too many covariate points had a non-positive quantile-path base to
    form a pooled tail-index estimate."""

    def __init__(self, message, n_excluded=None, n_total=None):
        super().__init__(message)
        self.n_excluded = n_excluded
        self.n_total = n_total


class InvalidDirectionError(InvalidInputError):
    """Extrapolation target level lies below the base level."""


class InvalidBaseError(InvalidInputError):
    """Extrapolation base quantile is not strictly positive."""


class BelowTailError(TailQRError):
    """Requested level lies below the model's base intermediate level;
    conventional quantile regression should serve it instead."""

    def __init__(self, message, tau=None, tau_base=None):
        super().__init__(message)
        self.tau = tau
        self.tau_base = tau_base


class ModelFormatError(TailQRError):
    """A serialized model could not be decoded."""


class SchemaVersionError(ModelFormatError):
    """Serialized model uses an unsupported schema version."""

    def __init__(self, message, version=None):
        super().__init__(message)
        self.version = version


class MissingFieldError(ModelFormatError):
    """Serialized model lacks a required field."""

    def __init__(self, field):
        super().__init__(f"serialized model is missing required field {field!r}")
        self.field = field


class SeriesFormatError(TailQRError):
    """A series CSV file is malformed."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class EmptySeriesError(TailQRError):
    """No usable rows remain after dropping missing values."""


class EmptyComparisonError(TailQRError):
    """All prediction pairs were dropped, nothing left to compare."""


class BatchError(TailQRError):
    """Every basin in a batch failed."""

    def __init__(self, message, failures=None):
        super().__init__(message)
        self.failures = dict(failures or {})

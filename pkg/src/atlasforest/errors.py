"""Exception hierarchy shared across the pipeline.

Exit-code mapping used by the CLI: ConfigError -> 2, DataError -> 3,
NumericError -> 4, anything else -> 1.
"""


class PipelineError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 1


class ConfigError(PipelineError):
    """Invalid configuration, unknown option values, missing config keys."""

    exit_code = 2


class DataError(PipelineError):
    """Problems with input data: schema, ranges, missing required values."""

    exit_code = 3


class NumericError(PipelineError):
    """Numerical failures: singular designs, degenerate variances, undefined metrics."""

    exit_code = 4


class InvalidValueError(DataError):
    """A value is non-finite or outside its documented domain."""


class SchemaError(DataError):
    """CSV structure problems: unknown columns, duplicate ids, malformed rows."""


class IncompletePanelError(DataError):
    """A biomarker rule was asked to fire on a partially observed panel."""


class IncompleteRecordError(DataError):
    """A subject record lacks a field required for group assignment."""


class UnimputableColumnError(DataError):
    """A training column has no observed values to take a median from."""


class InsufficientReferenceError(DataError):
    """Fewer reference (CN) rows than the model minimum."""


class SingularDesignError(NumericError):
    """Rank-deficient design matrix in a least-squares fit."""


class DegenerateResidualError(NumericError):
    """Residual standard deviation is zero; z-scores are undefined."""


class UndefinedMetricError(NumericError):
    """A metric's denominator is zero."""

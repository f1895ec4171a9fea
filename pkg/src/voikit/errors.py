"""Exception hierarchy.

Two broad families matter to callers (and to the CLI exit codes):
data/validation problems with the inputs, and numeric/method failures
raised while estimating.
"""


class VoiError(Exception):
    """Base class for every error raised by voikit."""


class DataError(VoiError, ValueError):
    """Input data or configuration is invalid."""


class FormatError(DataError):
    """A file does not follow the expected layout."""


class ParseError(DataError):
    """A cell could not be parsed; carries the row and column."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class SchemaError(DataError):
    """Column names are duplicated, missing or inconsistent."""


class DomainError(DataError):
    """A parameter value lies outside the support of its distribution."""


class MethodError(VoiError):
    """A numeric method could not produce a trustworthy result."""


class NumericError(MethodError, ArithmeticError):
    """Non-finite values or a singular linear system."""


class ModelError(MethodError):
    """The decision model produced unusable output."""


class DimensionError(MethodError, ValueError):
    """Too many covariates for a flexible regression."""


class DiagnosticsError(MethodError):
    """Regression diagnostics failed; ``report`` holds the details."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DegeneracyError(MethodError):
    """Importance weights collapsed."""


class EstimationError(MethodError):
    """An estimator gave a non-positive or otherwise invalid answer."""


class NoConjugateUpdate(MethodError):
    """No closed-form posterior exists for this prior/likelihood pair."""

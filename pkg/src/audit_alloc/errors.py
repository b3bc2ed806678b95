"""Exception types shared across the package."""


class AuditAllocError(Exception):
    """Base class for all package errors."""


class ConfigurationError(AuditAllocError):
    """Invalid configuration (bad vectors, missing fields, contradictory options)."""


class PopulationSizeError(AuditAllocError):
    """Requested population is too small for the operation."""


class CsvParseError(AuditAllocError):
    """A CSV source violates the documented schema."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class DataError(AuditAllocError):
    """Non-finite or otherwise unusable training data."""


class DegenerateLabelError(DataError):
    """Classification target has a single class."""


class DegenerateGroupError(AuditAllocError):
    """A bucket lacks the label variety an operation requires."""

    def __init__(self, message: str, bucket: int):
        super().__init__(message)
        self.bucket = bucket


class DimensionMismatchError(AuditAllocError):
    """Feature count of the input does not match the fitted model."""


class BudgetError(AuditAllocError):
    """Budget is infeasible, non-positive, or mismatched between allocations."""


class MissingCellError(AuditAllocError):
    """A cost-model lookup hit a (bucket, group) cell with no entry."""

    def __init__(self, message: str, bucket: int, group: int):
        super().__init__(message)
        self.bucket = bucket
        self.group = group

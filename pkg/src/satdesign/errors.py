"""Exception hierarchy shared across the package."""


class SatDesignError(Exception):
    """Base class for all package errors."""


class InvalidInputError(SatDesignError, ValueError):
    """Malformed or out-of-range input."""


class DomainError(InvalidInputError):
    """Argument outside the mathematical domain of the operation."""


class DegenerateAssignmentError(SatDesignError):
    """An estimator is undefined for the realized assignment."""


class ConsistencyError(SatDesignError):
    """A proportion vector does not map to integer treated counts."""


class UnsupportedConfigurationError(SatDesignError):
    """The requested formula does not apply to this configuration."""


class ModelMismatchError(SatDesignError):
    """The outcome model does not fit the requested representation."""


class AssumptionViolationError(SatDesignError):
    """A modelling assumption required by a formula does not hold."""


class TooLargeError(SatDesignError):
    """An exhaustive computation exceeds its configured limit."""

    def __init__(self, message: str, count: int):
        super().__init__(message)
        self.count = count


class SchemaError(SatDesignError):
    """A run configuration failed validation."""

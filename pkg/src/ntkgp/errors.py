"""Exception types raised across the package."""


class NtkGpError(Exception):
    """Base class for all package errors."""


class DomainError(NtkGpError, ValueError):
    """An argument lies outside the domain of a function."""


class DegenerateInputError(NtkGpError, ValueError):
    """Inputs for which a quantity is undefined (zero norm, identical pair)."""


class ShapeError(NtkGpError, ValueError):
    """Array dimensions do not agree."""


class ContractError(NtkGpError, ValueError):
    """A precondition of an operation was violated by the caller."""


class ConditioningError(NtkGpError, ArithmeticError):
    """A covariance matrix could not be factorised even after jitter."""


class NumericError(NtkGpError, ArithmeticError):
    """A computation produced non-finite values."""


class IngestionError(NtkGpError, ValueError):
    """A dataset file could not be parsed into the expected schema."""


class SchemaError(NtkGpError, ValueError):
    """A persisted record has an unknown or incompatible schema version."""

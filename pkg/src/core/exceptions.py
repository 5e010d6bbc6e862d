"""Custom exceptions for the bifikle surrogate toolkit."""

from typing import Optional


class BifikleError(Exception):
    """Base exception class for bifikle errors."""
    exit_code = 1


class InvalidConfigurationError(BifikleError):
    """Raised when configuration is invalid or missing."""
    exit_code = 2

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


class InvalidArgumentError(BifikleError, ValueError):
    """Raised when an operation's preconditions are violated."""
    exit_code = 2


class OutOfDomainError(InvalidArgumentError):
    """Raised when a parameter or reference variable lies outside its bounds."""
    pass


class DataError(BifikleError):
    """Raised when input data is inconsistent."""
    exit_code = 3


class IncompatibleGridsError(DataError):
    """Raised when fields live on grids that cannot be combined."""
    pass


class InsufficientDataError(DataError):
    """Raised when too few samples are available for an estimator."""
    pass


class PairingError(DataError):
    """Raised when paired HF/LF data do not share the same design rows."""
    pass


class IngestionError(DataError):
    """Raised when external snapshot or design files fail validation."""
    def __init__(self, message: str, path: Optional[str] = None, row: Optional[int] = None):
        location = ""
        if path is not None:
            location = f" [{path}" + (f", row {row}" if row is not None else "") + "]"
        super().__init__(message + location)
        self.path = path
        self.row = row


class StorageError(DataError):
    """Raised when campaign files cannot be read or written."""
    def __init__(self, message: str, path: Optional[str] = None, cause: Exception = None):
        super().__init__(message)
        self.path = path
        self.cause = cause


class NumericalError(BifikleError):
    """Raised when a numerical procedure fails."""
    exit_code = 4


class DegenerateModeError(NumericalError):
    """Raised when a retained KLE mode has a zero eigenvalue."""
    pass


class InstabilityError(NumericalError):
    """Raised when an explicit time integration blows up."""
    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class ModelEvaluationError(NumericalError):
    """Raised when a forward model fails to evaluate."""
    def __init__(self, message: str, problem: str, cause: Exception = None):
        super().__init__(message)
        self.problem = problem
        self.cause = cause

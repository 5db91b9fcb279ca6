"""Exception types shared across the package."""


class L0CertError(Exception):
    """Base class for all package errors."""


class InvalidInputError(L0CertError, ValueError):
    """Raised when inputs violate a documented precondition (bad labels,
    out-of-range cardinality, NaNs, malformed files)."""


class UnsupportedOperationError(L0CertError):
    """Raised when an operation is requested for a loss that only supports
    conjugate (bound-grade) evaluation."""


class NumericalError(L0CertError, RuntimeError):
    """Raised when an iterative routine produced a non-finite value or
    failed to converge.  Carries the iteration index when known."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class InfeasibleNodeError(L0CertError):
    """Raised when a branch-and-bound node has a negative remaining
    cardinality budget or contradictory fixed sets."""


class DataFormatError(InvalidInputError):
    """Raised on dataset/instance parse failures.  Carries the 1-based line
    number of the offending record when known."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line

"""Exception hierarchy.

Every error raised on purpose by the library derives from ``GVCPLMError`` so
callers (the CLI in particular) can sort failures into data problems and
numerical problems.
"""


class GVCPLMError(Exception):
    """Base class for all library errors."""


class DataValidationError(GVCPLMError, ValueError):
    """Input data violates a structural requirement (shape, finiteness, roles)."""


class ConfigError(GVCPLMError, ValueError):
    """A run configuration is malformed.  ``errors`` lists every problem found."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class NumericalError(GVCPLMError, ArithmeticError):
    """Base class for failures of the numerical procedures."""


class DomainError(NumericalError):
    """A fitted mean reached the boundary of the family's mean range."""


class SingularMatrixError(NumericalError):
    """A Hessian or sandwich bread matrix could not be inverted."""


class ConvergenceError(NumericalError):
    """An iterative solver failed to converge."""


class InsufficientWindowError(NumericalError):
    """Too few observations carry kernel weight at an evaluation point."""

    def __init__(self, message, u0=None):
        super().__init__(message)
        self.u0 = u0


class DegenerateFitError(NumericalError):
    """Effective parameters reach the sample size, so GCV is undefined."""


class UnsupportedPenaltyError(GVCPLMError, TypeError):
    """The requested operation is not defined for this penalty kind."""


class BelowThresholdError(GVCPLMError, ValueError):
    """A coefficient is at or below the zero threshold and must be set to zero."""

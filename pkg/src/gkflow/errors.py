"""Exception types shared across the package."""


class GkflowError(Exception):
    """Base class for all package errors."""


class ValidationError(GkflowError):
    """Input data fails an invariant; carries the offending residual."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class NumericalAbort(GkflowError):
    """A computation cannot continue (chart exit, singular matrix)."""


class ChartExitError(NumericalAbort):
    pass


class SingularError(NumericalAbort):
    pass


class PositivityError(GkflowError):
    """A metric candidate fails to be positive definite."""

    def __init__(self, message: str, point=None, eigenvalue: float | None = None):
        super().__init__(message)
        self.point = point
        self.eigenvalue = eigenvalue

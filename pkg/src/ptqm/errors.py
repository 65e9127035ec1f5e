"""Exception hierarchy shared by all modules."""


class PTQMError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(PTQMError, ValueError):
    """Input violates a documented precondition or invariant."""


class NumericalError(PTQMError, ArithmeticError):
    """A numerical kernel failed (non-convergence, overflow, singularity).

    ``residual`` carries the offending residual when one is available.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual

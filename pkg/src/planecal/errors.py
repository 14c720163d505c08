"""Exception types shared across the package."""


class PlanecalError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgumentError(PlanecalError, ValueError):
    """Caller passed something malformed: wrong shape, non-finite, out of contract."""


class DegenerateOrientationError(PlanecalError, ArithmeticError):
    """Pitch at +-pi/2: the roll/pitch extraction is singular there."""


class NonFiniteResidualError(PlanecalError, ArithmeticError):
    """Residual evaluation produced NaN or inf during optimization."""


class SingularPoolError(PlanecalError, ArithmeticError):
    """The pool's summed information matrix is rank-deficient."""


class PartialPoolError(PlanecalError, RuntimeError):
    """Pool construction hit the attempt cap before reaching the requested size.

    Carries the partial pool so callers can keep what was found.
    """

    def __init__(self, message, pool):
        super().__init__(message)
        self.pool = pool

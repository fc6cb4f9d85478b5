"""Exception and warning types raised across the engine."""


class FreeFloatError(Exception):
    """Base class for engine errors.

    ``time`` carries the simulation time (s) when the error was raised inside
    a run, otherwise ``None``.
    """

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time

    def __str__(self):
        msg = super().__str__()
        if self.time is not None:
            return f"{msg} (t = {self.time:.6g} s)"
        return msg


class ParseError(FreeFloatError, ValueError):
    """A model, scenario or state file is malformed."""


class ValidationError(FreeFloatError, ValueError):
    """A physical or structural invariant is violated; message names the field."""


class DimensionMismatch(FreeFloatError, ValueError):
    pass


class SingularH0(FreeFloatError, ArithmeticError):
    """Locked-system momentum matrix could not be inverted."""


class IllConditioned(FreeFloatError, ArithmeticError):
    def __init__(self, message, condition=None, time=None):
        super().__init__(message, time=time)
        self.condition = condition


class SolveFailure(FreeFloatError, ArithmeticError):
    """Cholesky factorisation of the generalized inertia broke down."""


class NonFiniteState(FreeFloatError, FloatingPointError):
    pass


class BadDuration(FreeFloatError, ValueError):
    pass


class BalanceSingularity(UserWarning):
    """Balance-arm solve fell back to damped least squares."""

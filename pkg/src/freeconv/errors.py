"""Exception hierarchy shared by all freeconv modules."""


class FreeconvError(Exception):
    """Base class for every error raised by freeconv."""


class ParseError(FreeconvError, ValueError):
    """Malformed expression text; ``position`` is the 0-based offset."""

    def __init__(self, message, position=None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class SingularMatrixError(FreeconvError, ArithmeticError):
    pass


class NotHermitianError(FreeconvError, ValueError):
    pass


class ConvergenceError(FreeconvError, ArithmeticError):
    pass


class HalfPlaneError(FreeconvError, ValueError):
    """An argument or iterate is outside the operator upper half-plane."""


class FixedPointError(ConvergenceError):
    """The subordination iteration hit ``max_iter``; carries the last residual."""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class QuadratureError(ConvergenceError):
    pass


class PencilError(FreeconvError, ValueError):
    pass


class ConfigError(FreeconvError, ValueError):
    pass

"""Exception types raised across the package."""


class NewSteinError(Exception):
    """Base class for package errors."""


class DimensionMismatch(NewSteinError, ValueError):
    pass


class NonFiniteError(NewSteinError, FloatingPointError):
    """A computation produced NaN or infinity."""


class DegenerateSpectrum(NewSteinError, ValueError):
    """Thresholded noise level is too small to invert."""


class DenominatorNearZero(NewSteinError, ArithmeticError):
    """The rank-one curvature correction has a vanishing denominator."""


class SingularHessian(NewSteinError, ArithmeticError):
    def __init__(self, message, condition_number=float("inf")):
        super().__init__(message)
        self.condition_number = condition_number


class InfeasibleStart(NewSteinError, ValueError):
    """Starting distance violates theta < (1 - tau1) / tau2."""


class EmptyInterval(NewSteinError, ValueError):
    pass


class Degenerate(NewSteinError, ValueError):
    pass


class ParseError(NewSteinError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(NewSteinError, ValueError):
    pass

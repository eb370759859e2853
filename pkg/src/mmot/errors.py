class MOTError(Exception):
    """Base class for solver errors."""


class ArgumentError(MOTError, ValueError):
    pass


class NumericalFailure(MOTError, ArithmeticError):
    pass


class MonotonicityViolation(NumericalFailure):
    """Dual value increased where exact block minimization forbids it."""


class BoundViolation(MOTError, AssertionError):
    """A convergence-rate certificate was violated during a solve."""


class ScaleCapExceeded(ArgumentError):
    pass

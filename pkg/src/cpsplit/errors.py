"""Exception types shared across the package."""


class CpsplitError(Exception):
    """Base class for all package-specific errors."""


class InvalidParameterError(CpsplitError, ValueError):
    """A numeric or structural argument is out of its allowed range."""


class UnknownProblemError(CpsplitError, KeyError):
    """A problem name does not match any built-in problem."""


class ConfigError(CpsplitError, ValueError):
    """A problem configuration file is malformed or inconsistent."""


class FieldDomainError(CpsplitError, ValueError):
    """A field was evaluated at a point outside its domain."""


class DegenerateFieldError(CpsplitError, ValueError):
    """A quantity that divides by |B| was requested where B vanishes."""


class FixedPointDivergedError(CpsplitError, RuntimeError):
    """The implicit-step fixed-point iteration failed to converge.

    Carries the last iterate so callers can inspect how far the
    iteration got before being cut off.
    """

    def __init__(self, message, last_iterate=None, increment=None, iterations=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.increment = increment
        self.iterations = iterations


class NumericalBlowupError(CpsplitError, ArithmeticError):
    """A non-finite state was produced during time stepping.

    Carries the partial trajectory accumulated up to the failure.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class MaxStepsExceededError(CpsplitError, RuntimeError):
    """The adaptive reference solver hit its step budget."""


class StiffnessSuspectedError(CpsplitError, RuntimeError):
    """The adaptive reference solver drove the step size below the
    representable floor, which usually indicates a stiff or singular
    right-hand side."""

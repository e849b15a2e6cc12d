"""Exception hierarchy shared by every module of the package."""


class MFACError(Exception):
    """Base class for all package errors."""


class ConfigurationError(MFACError, ValueError):
    """Inconsistent orders, bad parameters, malformed scenario."""


class WindowError(MFACError, ValueError):
    """Not enough history to form the requested window."""


class NumericError(MFACError, ArithmeticError):
    """Non-finite values reached a numeric routine."""


class DegenerateGainError(MFACError, ArithmeticError):
    """Input gain too close to zero for the unregularized law."""


class DegeneratePlantError(MFACError, ArithmeticError):
    """Static-error formula has a vanishing denominator."""


class IterationDivergenceError(MFACError, ArithmeticError):
    """The inner model rollout of the iterative law blew up."""


class TraceParseError(MFACError, ValueError):
    """Malformed trace CSV."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line

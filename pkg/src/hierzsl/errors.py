"""Exception types.

Validation problems derive from ``ValueError``; numerical breakdowns derive
from ``ArithmeticError``.  The CLI maps the former to exit code 2 and the
latter to exit code 1.
"""


class HZSLError(Exception):
    pass


class ShapeError(HZSLError, ValueError):
    pass


class IsolatedVertexError(HZSLError, ValueError):
    pass


class ConvergenceError(HZSLError, ArithmeticError):
    pass


class SylvesterError(HZSLError, ArithmeticError):
    """Raised when ``AX + XB = C`` has no unique solution.

    ``gap`` is the smallest ``|lambda_A + lambda_B|`` observed, when known.
    """

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


class ConfigError(HZSLError, ValueError):
    pass


class NumericalError(HZSLError, ArithmeticError):
    pass


class DataError(HZSLError, ValueError):
    """A dataset or configuration file is missing, malformed or inconsistent."""

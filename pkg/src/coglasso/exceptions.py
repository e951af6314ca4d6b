"""Exception hierarchy.

The CLI maps these onto exit codes: parameter errors are usage errors (1),
data errors are input problems (2) and numerical errors are solver or
generator failures (3).
"""


class CoglassoError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(CoglassoError, ValueError):
    """An argument is outside its documented domain."""


class DataError(CoglassoError, ValueError):
    """Input data cannot be parsed or is structurally inconsistent."""


class DegenerateInputError(DataError):
    """Input data is parseable but degenerate (e.g. a constant column)."""


class NumericalError(CoglassoError, ArithmeticError):
    """A numerical procedure hit a non-positive pivot or similar."""


class DivergenceError(NumericalError):
    """Non-finite values appeared during coordinate descent."""


class GenerationError(NumericalError):
    """Synthetic ground-truth generation failed."""

"""
Exception hierarchy for the message-passing lab

Non-fatal conditions (non-convergence of power iteration, capped depth,
overflow during traces) are reported as flags on result objects instead.
Errors caused by the caller's input also subclass ValueError; the CLI maps
them to exit code 2.
"""
from typing import Any


class MplabError(Exception):
    """Base class for all lab errors"""


class InvalidParameterError(MplabError, ValueError):
    """A precondition on a scalar parameter or option was violated"""


class DimensionMismatchError(MplabError, ValueError):
    """Matrix or vector shapes are incompatible"""


class GraphFormatError(MplabError, ValueError):
    """Edge-list text could not be parsed into a graph"""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}" if line_number else message)


class GraphStructureError(MplabError, ValueError):
    """The graph violates a structural assumption (isolated node, direction, cyclic relation)"""


class DegenerateInputError(MplabError, ValueError):
    """Input lies on a measure-zero set where the operation is undefined"""

    def __init__(self, message: str, index: int | None = None):
        self.index = index
        super().__init__(message)


class ConvergenceError(MplabError):
    """An iterative solver hit its iteration cap"""

    def __init__(self, message: str, best: Any = None, iterations: int = 0):
        self.best = best
        self.iterations = iterations
        super().__init__(message)


class NumericalOverflowError(MplabError):
    """State norm left the guarded range"""

    def __init__(self, message: str, iteration: int):
        self.iteration = iteration
        super().__init__(message)


class StepError(MplabError):
    """An operator step failed during an iterated trace"""

    def __init__(self, iteration: int, cause: Exception):
        self.iteration = iteration
        super().__init__(f"step failed at iteration {iteration}: {cause}")


class SizeCapError(MplabError, ValueError):
    """Dense operator would exceed the configured size cap"""


class ConfigError(MplabError, ValueError):
    """Run configuration is invalid or references missing files"""


class VerificationError(MplabError):
    """A numerical identity that must hold was violated"""

"""Exception types shared across the package."""


class SquashscopeError(Exception):
    """Base class for all library errors."""


class GraphValidationError(SquashscopeError):
    """A graph does not satisfy the preconditions of an operation."""


class GenerationError(SquashscopeError):
    """A generator could not produce a graph with the requested properties."""


class ParseError(SquashscopeError):
    """A graph file is malformed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConvergenceError(SquashscopeError):
    """An iterative numerical routine did not converge within its cap."""


class PremiseViolation(SquashscopeError):
    """Inputs violate the hypotheses a bound needs; names the failed inequality."""


class CertificationError(SquashscopeError):
    """Constants for a model cannot be certified from the given information."""


class DimensionMismatch(SquashscopeError):
    """Shapes of model, features, or graphs are inconsistent."""

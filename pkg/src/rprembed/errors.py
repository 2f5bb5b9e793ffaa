"""Exception types shared across the package."""


class RprEmbedError(Exception):
    """Base class for all package errors."""


class ValidationError(RprEmbedError, ValueError):
    """Input data or configuration violates a documented invariant."""


class ParseError(ValidationError):
    """A line of an input file could not be parsed."""

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{self.path}:{lineno}: {message}")


class DegenerateNodeError(RprEmbedError, ValueError):
    """Operation is undefined for a node (e.g. no neighbors, nothing to sample)."""


class NonFiniteError(RprEmbedError, ArithmeticError):
    """A loss or gradient became NaN or infinite."""

class BalshrinkError(Exception):
    """Base class for package errors."""


class DimensionError(BalshrinkError, ValueError):
    """Input dimension is invalid or inconsistent."""


class DivergentIntegralError(BalshrinkError, ArithmeticError):
    """A moment or radial integral required by a computation is infinite."""


class MissingMixingError(BalshrinkError, ValueError):
    """A kernel has no Laplace-mixing record but one is required."""


class ConfigError(BalshrinkError, ValueError):
    """Experiment configuration could not be parsed or validated."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)

"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array dimensions do not agree."""


class DegenerateInputError(ValueError):
    """Input for which the operation is undefined (e.g. a zero-norm vector)."""


class NumericError(FloatingPointError):
    """Non-finite values where finite ones are required."""


class DomainError(ValueError):
    """Argument outside the valid domain (label out of range, n = 0, ...)."""


class ConfigError(ValueError):
    """Invalid configuration or a configuration that does not fit the corpus."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class DataError(ValueError):
    """Corpus content is malformed or inconsistent."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EvaluationError(RuntimeError):
    """Evaluation cannot be carried out (e.g. empty candidate pool)."""

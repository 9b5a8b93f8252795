"""Exception types shared across the package.

Invalid arguments raise the built-in ValueError; the classes below cover
failures that callers may want to handle separately (and that the CLI maps
to distinct exit codes).
"""


class GyroFuseError(Exception):
    """Base class for package-specific errors."""


class ValidationError(GyroFuseError):
    """Inputs are well-formed but violate a documented contract."""


class CoverageError(ValidationError):
    """A gyro log does not cover the requested time window."""


class SceneSpecError(ValidationError):
    """A synthetic scene specification is unusable."""


class ParseError(GyroFuseError):
    """A text input could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FormatError(GyroFuseError):
    """A binary file does not follow its declared format."""


class NumericError(GyroFuseError):
    """A numeric computation produced non-finite intermediates."""

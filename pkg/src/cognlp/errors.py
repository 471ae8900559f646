"""Exception types shared across the toolkit."""


class CognlpError(Exception):
    """Base class for all toolkit errors."""


class ParseError(CognlpError):
    """A line of an interchange file could not be decoded."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(CognlpError):
    """Well-formed input that violates a semantic invariant."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(CognlpError):
    """Inconsistent or unsupported configuration."""


class StateError(CognlpError):
    """Operation invoked before its prerequisites (e.g. apply before fit)."""

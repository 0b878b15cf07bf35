"""Exception hierarchy shared across the package."""


class XmtcError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(XmtcError):
    """A file does not conform to its declared on-disk format."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class BoundsError(ParseError):
    """An index in a data file exceeds the dimensions declared by its header."""


class FormatError(XmtcError):
    """Records within one file disagree with each other (e.g. mixed dimensions)."""


class ConfigError(XmtcError):
    """A configuration value is missing, malformed, or out of range."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"config field '{field}': {message}")


class DependencyError(XmtcError):
    """A pipeline stage was invoked before the stage that produces its input."""


class NotFittedError(XmtcError):
    """An estimator was used before ``fit`` was called."""

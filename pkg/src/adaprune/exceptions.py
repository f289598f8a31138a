"""Exception hierarchy shared by every module."""


class AdaPruneError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(AdaPruneError, ValueError):
    """Raised when arguments violate a documented precondition."""


class InstanceTooLargeError(AdaPruneError):
    """Raised when exhaustive enumeration would exceed its guard."""


class ParseError(AdaPruneError, ValueError):
    """Raised on malformed input files. Carries the offending line number."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class UndefinedCorrelationError(AdaPruneError, ValueError):
    """Raised when a correlation is requested for a constant vector."""

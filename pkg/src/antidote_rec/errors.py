"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class AntidoteRecError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(AntidoteRecError, ValueError):
    """Invalid argument, option combination, or configuration value."""


class DataError(AntidoteRecError, ValueError):
    """Invalid or inconsistent rating / group / antidote data."""


class ParseError(DataError):
    """Malformed input line; carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class NumericalError(AntidoteRecError, ArithmeticError):
    """A linear solve failed (singular normal equations or non-finite values)."""

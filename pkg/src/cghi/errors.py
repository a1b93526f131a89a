"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: ``ConfigError`` -> 1, ``DataError`` -> 2,
``NumericError`` -> 3.
"""


class CGHIError(Exception):
    """Base class for all package errors."""


class ConfigError(CGHIError, ValueError):
    """Invalid configuration, variant/toggle combination, or layer wiring."""


class DataError(CGHIError, ValueError):
    """Malformed or missing input data."""


class IngestionError(DataError):
    """A raw data file could not be parsed; the message names the file."""


class StateError(CGHIError, RuntimeError):
    """An operation was called out of order (e.g. backward before forward)."""


class NumericError(CGHIError, ArithmeticError):
    """Training produced a non-finite value."""

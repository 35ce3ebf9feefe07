"""Exception types shared across the package.

The CLI maps these onto its exit codes: ``DataError`` -> 2,
``NumericalError`` -> 3, ``ConfigError`` -> 1.
"""


class HHISSError(Exception):
    """Base class for all package errors."""


class ConfigError(HHISSError, ValueError):
    """Invalid configuration or arguments."""


class DataError(HHISSError, ValueError):
    """Malformed, inconsistent or insufficient input data."""


class NumericalError(HHISSError, FloatingPointError):
    """Non-finite values encountered during a numerical routine."""

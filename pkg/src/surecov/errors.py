"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: parameter/config problems exit with 2,
data ingestion problems with 3, and numerical failures with 4.
"""

__all__ = ["SurecovError", "ParameterError", "DataError", "NumericalError"]


class SurecovError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(SurecovError, ValueError):
    """Invalid model, scheme, or configuration parameters."""


class DataError(SurecovError, ValueError):
    """Malformed or insufficient input data."""


class NumericalError(SurecovError, ArithmeticError):
    """A numerical operation failed (e.g. factorization of a non-PD matrix)."""

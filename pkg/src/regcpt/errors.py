"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4.
"""


class RegcptError(Exception):
    """Base class for all package errors."""


class ConfigError(RegcptError):
    """Invalid configuration or usage (bad flag values, malformed group specs)."""


class DataError(RegcptError):
    """Problems with input data: missing files, parse failures, shape violations."""


class NumericError(RegcptError):
    """Numerical failure: degenerate variances, non-convergence, collinearity."""

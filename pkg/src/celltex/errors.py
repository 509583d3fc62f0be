"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes, so library code should raise
the most specific one that applies instead of bare ValueError.
"""


class CelltexError(Exception):
    """Base class for all package errors."""


class ConfigError(CelltexError):
    """Bad configuration: unknown key, out-of-range value, malformed file."""


class DataError(CelltexError):
    """Bad input data: unreadable image, malformed manifest, shape mismatch."""


class NumericError(CelltexError):
    """Numerical failure: divergence, rank deficiency, non-finite values."""

"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError and
CheckpointError -> 2, NonFiniteError -> 3.
"""


class SessrecError(Exception):
    """Base class for all package errors."""


class ConfigError(SessrecError):
    """Invalid or unknown configuration key/value."""


class DataError(SessrecError):
    """Unusable input data (unreadable file, empty corpus, bad prefix)."""


class CheckpointError(SessrecError):
    """Corrupt, truncated or incompatible checkpoint file."""


class ShapeMismatchError(SessrecError):
    """Tensor operands have incompatible shapes."""


class NonFiniteError(SessrecError):
    """A numeric operation produced NaN or infinity."""

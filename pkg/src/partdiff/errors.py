"""Exception types shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, NumericalError -> 4.
"""


class PartdiffError(Exception):
    """Base class for all package errors."""


class ConfigError(PartdiffError):
    """Invalid configuration file, flag value, or unresolvable path."""


class DataError(PartdiffError):
    """Malformed dataset, checkpoint, or result file."""


class NumericalError(PartdiffError):
    """Non-finite value encountered where finiteness is required."""


class ShapeError(PartdiffError):
    """Shape-incompatible operands passed to a differentiable primitive."""


class ContractError(PartdiffError):
    """API misuse: a documented precondition was violated by the caller."""

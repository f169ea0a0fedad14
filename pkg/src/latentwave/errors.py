"""Exception taxonomy shared by every latentwave module.

The command line maps these onto process exit codes: configuration and
contract problems exit 2, I/O problems exit 3, numeric failures exit 4.
"""


class LatentWaveError(Exception):
    """Base class for all library errors."""


class ContractError(LatentWaveError, ValueError):
    """An operation was called with arguments violating its contract
    (shape mismatch, bad parameter range, repeated backward, ...)."""


class ConfigError(LatentWaveError, ValueError):
    """A configuration is internally inconsistent or out of range."""


class GeometryError(ConfigError):
    """A scan geometry is degenerate (e.g. a ray with source == detector)."""


class NumericError(LatentWaveError, ArithmeticError):
    """A computation produced non-finite values or failed numerically."""


class ContainerError(LatentWaveError, OSError):
    """A container file is malformed, truncated, or has the wrong magic."""

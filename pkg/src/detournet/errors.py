"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: ConfigError -> 2,
ArtifactError -> 3, everything else is a crash (non-zero, unspecified).
"""


class DetourNetError(Exception):
    """Base class for all package errors."""


class DimensionError(DetourNetError):
    """Array shapes do not line up (caller bug, not data corruption)."""


class NumericError(DetourNetError):
    """NaN/Inf crossed a layer or optimizer boundary."""


class UsageError(DetourNetError):
    """An API was called out of order (e.g. backward before forward)."""


class ValidationError(DetourNetError):
    """A plan or report failed structural validation; message lists all violations."""


class CapacityError(DetourNetError):
    """Request exceeds an enumeration guard; use the Monte Carlo path instead."""


class ConfigError(DetourNetError):
    """User-facing configuration problem; message names the offending field."""


class ArtifactError(DetourNetError):
    """A model artifact or report file is corrupt or has an unsupported version."""

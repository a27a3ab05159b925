"""Exception types raised across the calibration pipeline.

The CLI maps these onto exit codes, so every failure a user can trigger
from a config or a data file should surface as one of these classes.
"""


class SupportCalError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(SupportCalError, ValueError):
    """Malformed or inconsistent configuration."""


# geometry
class NearPiRotation(SupportCalError, ValueError):
    """Rotation angle too close to pi for a unique logarithm."""


class OutOfView(SupportCalError):
    """Point lies behind (or at) the camera plane, or outside the image."""


# scene simulation
class EmptySpec(ConfigError):
    """Scene spec requests no classes."""


class NoVisiblePoints(SupportCalError):
    """No scene point is visible under both the estimate and the reference."""


# support map
class InvalidTau(SupportCalError, ValueError):
    """Score scale must be strictly positive."""


class AlreadyNormalized(SupportCalError):
    """Operation requires a map that has not been normalized yet."""


class NotNormalized(SupportCalError):
    """Lookup requires a normalized map."""


class AllZeroMap(SupportCalError):
    """No calibration evidence was accumulated."""


class ShapeMismatch(SupportCalError, ValueError):
    """Maps differ in grid shape or kernel parameters."""


class IoFailure(SupportCalError, OSError):
    """Reading or writing a file failed."""


class BadMagic(IoFailure):
    """File does not start with the expected magic bytes."""


class VersionMismatch(IoFailure):
    """File format version is not supported."""


# refinement
class DegenerateSupport(SupportCalError):
    """All support values are zero."""


class InsufficientPopulation(SupportCalError, ValueError):
    """More samples requested than nonzero-probability indices exist."""


class RankDeficient(SupportCalError):
    """Normal equations are singular; the geometry does not constrain 6 DoF."""


# analysis
class EmptyInput(SupportCalError, ValueError):
    """Nothing to aggregate."""


class LengthMismatch(SupportCalError, ValueError):
    """Paired inputs differ in length."""

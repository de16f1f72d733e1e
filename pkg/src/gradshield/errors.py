"""Exception types shared across the package."""


class GradShieldError(Exception):
    """Base class for every error this package raises deliberately."""


class ShapeError(GradShieldError):
    """Operand shapes are incompatible with the requested operation."""


class GraphError(GradShieldError):
    """backward was called on a tensor that cannot support it."""


class CheckpointError(GradShieldError):
    """Checkpoint file is malformed, truncated, or version-incompatible."""


class DataError(GradShieldError):
    """A dataset file or dataset contents violate the expected format."""


class ConfigError(GradShieldError):
    """User-supplied configuration is invalid (CLI exit status 1)."""


class InvariantError(GradShieldError):
    """An internal invariant was violated: a bug, not a user error (CLI exit status 2)."""

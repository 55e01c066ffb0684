"""Exception types shared across the toolkit."""


class EmptyMaskError(ValueError):
    """Raised when an operation requires at least one foreground voxel."""


class GenerationError(RuntimeError):
    """Raised when a synthetic shape cannot be generated (empty/disconnected)."""


class DegenerateFitError(ValueError):
    """Raised when a regression fit has no variance in its inputs."""


class UndefinedCorrelationError(ValueError):
    """Raised when a correlation is requested for a constant input."""


class CheckpointError(RuntimeError):
    """Raised when a model checkpoint is malformed or inconsistent."""

"""Exception types shared across the package."""


class LevelSetError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(LevelSetError):
    """Field/mask dimensions are invalid or two operands disagree."""


class MaskError(LevelSetError):
    """A mask is empty or uniform where the operation needs both classes."""


class PromptError(LevelSetError):
    """A point prompt is missing or out of bounds."""


class EvolutionError(LevelSetError):
    """A step update produced non-finite values or a provider failed."""


class TapeError(LevelSetError):
    """The autodiff tape was used inconsistently."""


class TrainingError(LevelSetError):
    """Training diverged or was misconfigured."""


class DatasetError(LevelSetError):
    """Dataset generation or on-disk round-trip failed."""


class CheckpointError(LevelSetError):
    """A checkpoint file is malformed or does not match the architecture."""


class MetricError(LevelSetError):
    """Metric inputs are empty or mismatched."""

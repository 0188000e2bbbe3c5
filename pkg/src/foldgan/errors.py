"""Exception types shared across the package."""


class FoldganError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(FoldganError, ValueError):
    """A configuration value or key is invalid."""


class ShapeError(FoldganError, ValueError):
    """Array shapes are incompatible for the requested operation."""


class CheckpointError(FoldganError):
    """A checkpoint file is malformed, truncated, or of the wrong version."""


class TrainingDiverged(FoldganError, RuntimeError):
    """Training produced a non-finite quantity.

    Carries whatever was salvageable: the last finite distance estimate,
    the most recent good checkpoint, and the partial training log.
    """

    def __init__(self, message, em_estimate=None, checkpoint=None, log=None):
        super().__init__(message)
        self.em_estimate = em_estimate
        self.checkpoint = checkpoint
        self.log = log

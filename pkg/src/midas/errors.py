"""Exception types raised across the pipeline.

``ValidationError`` subclasses signal bad input (CLI exit code 1); everything
else deriving from ``MidasError`` is a runtime failure (exit code 2).
"""


class MidasError(Exception):
    """Base class for all pipeline errors."""


class ValidationError(MidasError, ValueError):
    """Input rejected before any computation."""


class InvalidArgument(ValidationError):
    pass


class InsufficientData(ValidationError):
    pass


class MisalignedStreams(ValidationError):
    pass


class DegenerateThresholds(ValidationError):
    pass


class ZeroResponseSensor(ValidationError):
    pass


class InsufficientReference(ValidationError):
    pass


class CannotBalance(ValidationError):
    pass


class DegenerateReference(ValidationError):
    pass


class NoSignal(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class NoEvents(MidasError):
    """Fewer than three thresholds were exceeded in a segment."""


class FitDiverged(MidasError):
    """Curve fit hit the iteration cap; ``best`` holds the last accepted iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class TrainingDiverged(MidasError):
    def __init__(self, epoch):
        super().__init__(f"loss became non-finite at epoch {epoch}")
        self.epoch = epoch


class CorruptModel(MidasError):
    pass

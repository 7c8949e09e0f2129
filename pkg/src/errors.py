"""
Exception hierarchy for the multi-view reconstruction toolkit.

Every error raised on purpose by this package derives from ReconError so the
CLI can turn it into a machine-readable failure.
"""


class ReconError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(ReconError):
    """Invalid or inconsistent configuration."""


class ShapeError(ReconError):
    """Tensor shapes do not match what an operation expects."""


class GeometryError(ReconError):
    """Invalid camera or geometric input."""


class DegenerateGeometryError(GeometryError):
    """Epipolar geometry is undefined (e.g. coincident camera centers)."""


class BundleFormatError(ReconError):
    """A SceneBundle or checkpoint directory is malformed."""


class LossError(ReconError):
    """A loss cannot be evaluated (e.g. no valid pixels)."""


class EngineError(ReconError):
    """Gradient or optimizer contract violated."""


class NonFiniteGradientError(EngineError):
    """A gradient contains NaN or inf values."""


class TrainingDivergedError(EngineError):
    """The training loss became non-finite."""

    def __init__(self, message: str, checkpoint_path: str = None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


class QualityError(ReconError):
    """A quality feature cannot be computed on the given input."""

"""One-shot texture defect localisation with a pyramid of single-image GANs."""

from .estimator import TextureInspector
from .exceptions import CheckpointError, ImageFormatError, ParameterError, TrainingError
from .inspection import InspectionResult, inspect
from .models import ScaleModel, TrainConfig, TrainedStack
from .training import train_stack

__all__ = [
    "CheckpointError",
    "ImageFormatError",
    "InspectionResult",
    "ParameterError",
    "ScaleModel",
    "TextureInspector",
    "TrainConfig",
    "TrainedStack",
    "TrainingError",
    "inspect",
    "train_stack",
]

__version__ = "0.1.0"

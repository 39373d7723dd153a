"""Penultimate-layer activation export for image classification datasets."""

from .config import (
    ConfigError,
    DatasetError,
    ExtractionConfig,
    ExtractorError,
    TrainingDiverged,
)
from .export import extract
from .model import FeatureClassifier, build_model
from .train import fine_tune, seed_everything

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "ExtractionConfig",
    "ExtractorError",
    "ConfigError",
    "DatasetError",
    "TrainingDiverged",
    "extract",
    "build_model",
    "FeatureClassifier",
    "fine_tune",
    "seed_everything",
]

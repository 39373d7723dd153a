"""Extraction job configuration and validation."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path


class ExtractorError(Exception):
    exit_code = 1


class ConfigError(ExtractorError):
    exit_code = 2


class DatasetError(ExtractorError):
    exit_code = 3


class TrainingDiverged(ExtractorError):
    exit_code = 4


# Allowed export widths: the five-feature edge case plus 32..2048.
MIN_WIDTH = 32
MAX_WIDTH = 2048
SMALL_WIDTH = 5


@dataclass
class ExtractionConfig:
    dataset_dir: str
    n_features: int
    out_path: str
    epochs: int = 2
    seed: int = 0
    split: str = "val"
    batch_size: int = 32
    device: str = "cpu"
    pretrained: bool = True
    weights_path: str | None = None
    train_backbone: bool = False
    learning_rate: float = 1e-3

    def __post_init__(self):
        n = self.n_features
        if n != SMALL_WIDTH and not MIN_WIDTH <= n <= MAX_WIDTH:
            raise ConfigError(
                f"n_features must be {SMALL_WIDTH} or in [{MIN_WIDTH}, {MAX_WIDTH}], got {n}"
            )
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.split not in ("train", "val", "all"):
            raise ConfigError(f"split must be train, val or all, got {self.split!r}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not Path(self.dataset_dir).is_dir():
            raise DatasetError(f"dataset directory {self.dataset_dir!r} does not exist")

    def as_dict(self) -> dict:
        return asdict(self)

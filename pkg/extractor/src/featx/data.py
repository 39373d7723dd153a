"""Imagenette-layout dataset loading.

Expected tree: root/train/<class>/*.jpeg and root/val/<class>/*.jpeg
(the public archive layout). Class names come from the directory names
and must agree between splits.
"""

from __future__ import annotations

from pathlib import Path

from torch.utils.data import ConcatDataset
from torchvision import datasets, transforms

from .config import DatasetError

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


def eval_transform():
    return transforms.Compose(
        [
            transforms.Resize(256),
            transforms.CenterCrop(224),
            transforms.ToTensor(),
            transforms.Normalize(IMAGENET_MEAN, IMAGENET_STD),
        ]
    )


def train_transform():
    return transforms.Compose(
        [
            transforms.RandomResizedCrop(224),
            transforms.RandomHorizontalFlip(),
            transforms.ToTensor(),
            transforms.Normalize(IMAGENET_MEAN, IMAGENET_STD),
        ]
    )


def _folder(root: Path, split: str, transform):
    split_dir = root / split
    if not split_dir.is_dir():
        raise DatasetError(f"expected split directory {split_dir} (Imagenette layout)")
    try:
        return datasets.ImageFolder(str(split_dir), transform=transform)
    except FileNotFoundError as exc:
        raise DatasetError(f"{split_dir}: {exc}")


def class_names(dataset_dir: str) -> list[str]:
    ds = _folder(Path(dataset_dir), "train", eval_transform())
    return list(ds.classes)


def load_split(dataset_dir: str, split: str, transform) -> tuple:
    """Dataset plus its class list for 'train', 'val' or 'all'."""
    root = Path(dataset_dir)
    if split in ("train", "val"):
        ds = _folder(root, split, transform)
        return ds, list(ds.classes)
    train = _folder(root, "train", transform)
    val = _folder(root, "val", transform)
    if train.classes != val.classes:
        raise DatasetError(
            f"train/val class mismatch: {train.classes} vs {val.classes}"
        )
    return ConcatDataset([train, val]), list(train.classes)

"""Transfer-learning fine-tune of the bottleneck and classification head."""

from __future__ import annotations

import logging
import random

import numpy as np
import torch
from torch import nn
from torch.utils.data import DataLoader

from .config import ExtractionConfig, TrainingDiverged
from .data import load_split, train_transform
from .model import FeatureClassifier

log = logging.getLogger("featx")


def seed_everything(seed: int):
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


def fine_tune(model: FeatureClassifier, config: ExtractionConfig) -> FeatureClassifier:
    """Train the new layers on the train split; backbone frozen by default.

    Raises TrainingDiverged if the loss stops being finite.
    """
    if config.epochs == 0:
        return model

    dataset, _ = load_split(config.dataset_dir, "train", train_transform())
    generator = torch.Generator().manual_seed(config.seed)
    loader = DataLoader(
        dataset,
        batch_size=config.batch_size,
        shuffle=True,
        generator=generator,
        num_workers=0,
    )

    device = torch.device(config.device)
    model.to(device)
    for param in model.trunk.parameters():
        param.requires_grad = config.train_backbone

    trained = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(trained, lr=config.learning_rate)
    loss_fn = nn.CrossEntropyLoss()

    model.train()
    if not config.train_backbone:
        model.trunk.eval()  # keep frozen batch-norm statistics
    for epoch in range(config.epochs):
        total, batches = 0.0, 0
        for images, targets in loader:
            images, targets = images.to(device), targets.to(device)
            optimizer.zero_grad()
            loss = loss_fn(model(images), targets)
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch + 1}; try a lower learning rate"
                )
            loss.backward()
            optimizer.step()
            total += float(loss.detach())
            batches += 1
        log.info("epoch %d/%d mean loss %.4f", epoch + 1, config.epochs, total / batches)
    model.eval()
    return model

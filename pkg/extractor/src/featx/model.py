"""Classifier with a configurable-width penultimate layer.

The backbone is a ResNet-50 trunk ending in pooled features of native
width 2048. When the requested export width differs, a trained linear
bottleneck (with ReLU) is inserted before the classification head; the
exported activations are whatever feeds the final dense layer.
"""

from __future__ import annotations

import logging

import torch
from torch import nn
from torchvision.models import ResNet50_Weights, resnet50

from .config import ConfigError, ExtractorError

log = logging.getLogger("featx")

NATIVE_WIDTH = 2048


class FeatureClassifier(nn.Module):
    def __init__(self, trunk: nn.Module, bottleneck: nn.Module | None, head: nn.Linear):
        super().__init__()
        self.trunk = trunk
        self.bottleneck = bottleneck
        self.head = head

    def features(self, images: torch.Tensor) -> torch.Tensor:
        """Penultimate activations: the input of the last dense layer."""
        pooled = torch.flatten(self.trunk(images), 1)
        if self.bottleneck is None:
            return pooled
        return self.bottleneck(pooled)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(images))


def _load_backbone(pretrained: bool, weights_path: str | None) -> nn.Module:
    if weights_path:
        backbone = resnet50(weights=None)
        state = torch.load(weights_path, map_location="cpu", weights_only=True)
        backbone.load_state_dict(state)
        return backbone
    if not pretrained:
        log.warning("using a randomly initialized backbone; features will be untrained")
        return resnet50(weights=None)
    try:
        return resnet50(weights=ResNet50_Weights.IMAGENET1K_V2)
    except Exception as exc:
        raise ExtractorError(
            "could not obtain pretrained backbone weights "
            f"({exc}); pass --weights PATH or --no-pretrained"
        )


def build_model(
    n_features: int,
    num_classes: int,
    pretrained: bool = True,
    weights_path: str | None = None,
) -> FeatureClassifier:
    if num_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {num_classes}")
    backbone = _load_backbone(pretrained, weights_path)
    if backbone.fc.in_features != NATIVE_WIDTH:
        raise ConfigError(
            f"backbone feature width {backbone.fc.in_features} != expected {NATIVE_WIDTH}"
        )
    trunk = nn.Sequential(*list(backbone.children())[:-1])
    if n_features == NATIVE_WIDTH:
        bottleneck = None
    else:
        bottleneck = nn.Sequential(nn.Linear(NATIVE_WIDTH, n_features), nn.ReLU(inplace=True))
    head = nn.Linear(n_features, num_classes)
    return FeatureClassifier(trunk, bottleneck, head)

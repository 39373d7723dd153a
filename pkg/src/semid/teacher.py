"""Transmitter-side logic: random feature ordering and packetization.

The sender draws a uniformly random permutation of feature positions once
per transmission and emits one (position, value) packet per step, so no
position is ever sent twice and a full drain covers the identity exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import FeaturePacket, Identity
from .errors import ConfigError

__all__ = ["TransmitPlan", "make_plan", "next_packet"]


@dataclass
class TransmitPlan:
    """One transmission session: the identity, its shuffle and a cursor."""

    identity: Identity
    permutation: np.ndarray
    cursor: int = 0

    @property
    def exhausted(self) -> bool:
        return self.cursor >= self.permutation.shape[0]

    @property
    def remaining(self) -> int:
        return int(self.permutation.shape[0]) - self.cursor


def make_plan(identity: Identity, seed: int) -> TransmitPlan:
    """Seeded Fisher-Yates shuffle of the identity's feature positions.

    The seed belongs in the run record: the same (identity, seed) pair
    always yields the same packet sequence.
    """
    if identity.n_features < 1:
        raise ConfigError("identity has no features")
    rng = np.random.default_rng(seed)
    permutation = rng.permutation(identity.n_features)
    permutation.flags.writeable = False
    return TransmitPlan(identity=identity, permutation=permutation)


def next_packet(plan: TransmitPlan) -> FeaturePacket | None:
    """Emit the next packet in plan order; None once all positions went out."""
    if plan.exhausted:
        return None
    position = int(plan.permutation[plan.cursor])
    plan.cursor += 1
    return FeaturePacket(position=position, value=float(plan.identity.features[position]))

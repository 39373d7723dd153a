"""Receiver-side engine: distance weighting, posterior updates, stopping.

The receiver accumulates feature packets, scores every candidate element
by the Euclidean distance between the received values and the element's
reference restricted to the received positions, converts distances to
inverse-distance weights, folds the weights into a running posterior and
stops as soon as the leading probability clears the confidence threshold.

States are immutable values: every operation returns a new state, so any
number of sessions can run concurrently against one shared base.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .base import FeaturePacket, SemanticBase
from .errors import ConfigError, ProtocolError

__all__ = [
    "PosteriorState",
    "Decision",
    "init_posterior",
    "partial_distances",
    "idw_weights",
    "update_posterior",
    "receive_packet",
    "check_stop",
    "force_decision",
]

# Distances at or below this absolute threshold count as exact matches.
ZERO_DISTANCE_EPS = 1e-12

# Allowed drift of a probability vector's sum away from 1.
PROB_SUM_TOL = 1e-9


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class PosteriorState:
    """Current belief over elements plus the features received so far."""

    probs: np.ndarray
    received_positions: tuple[int, ...]
    received_values: np.ndarray
    n_features: int

    @property
    def packets_used(self) -> int:
        return len(self.received_positions)

    @property
    def max_prob(self) -> float:
        return float(self.probs.max())

    @property
    def argmax_element(self) -> int:
        # np.argmax returns the first (lowest-id) index on ties.
        return int(np.argmax(self.probs))


@dataclass(frozen=True)
class Decision:
    """Final identification outcome of one session."""

    element_id: int
    confidence: float
    packets_used: int
    saturated: bool


def init_posterior(base: SemanticBase) -> PosteriorState:
    """Uniform prior over the base's elements; nothing received yet."""
    k = base.n_elements
    if k < 1:
        raise ConfigError("semantic base has no elements")
    probs = np.full(k, 1.0 / k)
    total = probs.sum()
    if abs(total - 1.0) > 1e-12:
        probs = probs / total
    return PosteriorState(
        probs=_frozen(probs),
        received_positions=(),
        received_values=_frozen(np.empty(0)),
        n_features=base.n_features,
    )


def partial_distances(state: PosteriorState, base: SemanticBase) -> np.ndarray:
    """Euclidean distance from the received values to each reference.

    Only the received positions enter the sum, so the distance space grows
    with every packet.
    """
    if state.packets_used == 0:
        raise ProtocolError("no features received yet; distances are undefined")
    positions = list(state.received_positions)
    diffs = base.reference_matrix[:, positions] - state.received_values
    return np.sqrt(np.sum(diffs * diffs, axis=1))


def idw_weights(distances: np.ndarray) -> np.ndarray:
    """Normalized inverse-distance weights for a set of candidate distances.

    The raw weight of candidate k is ((R - d_k) / (R * d_k))^2 with R the
    maximum distance in the set, which decreases strictly on (0, R] and
    vanishes at R. Degenerate inputs never divide by zero:

    - any distance within ZERO_DISTANCE_EPS of zero: the exact-match limit,
      uniform over the near-zero set and zero elsewhere;
    - all distances equal (including a single candidate): no information,
      uniform over all candidates.
    """
    d = np.asarray(distances, dtype=np.float64)
    k = d.shape[0]
    if k < 1:
        raise ConfigError("need at least one distance")
    if not np.isfinite(d).all() or (d < 0).any():
        raise ConfigError("distances must be finite and nonnegative")

    near_zero = d <= ZERO_DISTANCE_EPS
    if near_zero.any():
        w = near_zero.astype(np.float64)
        return w / w.sum()

    r = d.max()
    if d.min() == r:
        return np.full(k, 1.0 / k)

    raw = ((r - d) / (r * d)) ** 2
    total = raw.sum()
    if not np.isfinite(total):
        # 1/d overflowed; the limit concentrates all mass on the closest set.
        w = (d == d.min()).astype(np.float64)
        return w / w.sum()
    return raw / total


def update_posterior(state: PosteriorState, weights: np.ndarray) -> PosteriorState:
    """Fold one weight vector into the posterior and renormalize (L1).

    Packet bookkeeping stays with the caller; this touches probabilities
    only.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != state.probs.shape:
        raise ConfigError(
            f"weight vector has {w.shape[0]} entries, posterior has {state.probs.shape[0]}"
        )
    if abs(float(w.sum()) - 1.0) > PROB_SUM_TOL or (w < 0).any():
        raise ConfigError("weights must be nonnegative and sum to 1")
    mixed = state.probs + w
    return replace(state, probs=_frozen(mixed / mixed.sum()))


def receive_packet(
    state: PosteriorState, packet: FeaturePacket, base: SemanticBase
) -> PosteriorState:
    """Apply one feature packet: distances, weights, posterior, bookkeeping."""
    if packet.position >= base.n_features:
        raise ProtocolError(
            f"feature position {packet.position} out of range for N={base.n_features}"
        )
    if packet.position in state.received_positions:
        raise ProtocolError(f"feature position {packet.position} was already received")

    advanced = PosteriorState(
        probs=state.probs,
        received_positions=state.received_positions + (packet.position,),
        received_values=_frozen(np.append(state.received_values, packet.value)),
        n_features=state.n_features,
    )
    weights = idw_weights(partial_distances(advanced, base))
    return update_posterior(advanced, weights)


def check_stop(state: PosteriorState, confidence_threshold: float) -> Decision | None:
    """Decision once the leading posterior reaches the threshold, else None.

    The comparison is inclusive, so a threshold of 1.0 is met only by
    certainty. Ties resolve to the lowest element id.
    """
    if not 0.0 < confidence_threshold <= 1.0:
        raise ConfigError(
            f"confidence threshold must be in (0, 1], got {confidence_threshold}"
        )
    if state.max_prob >= confidence_threshold:
        return Decision(
            element_id=state.argmax_element,
            confidence=state.max_prob,
            packets_used=state.packets_used,
            saturated=False,
        )
    return None


def force_decision(state: PosteriorState) -> Decision:
    """Argmax decision after the sender exhausted all features.

    Only valid at saturation; the saturated flag marks the run for the
    metrics layer.
    """
    if state.packets_used < state.n_features:
        raise ProtocolError(
            f"cannot force a decision after {state.packets_used} of "
            f"{state.n_features} features"
        )
    return Decision(
        element_id=state.argmax_element,
        confidence=state.max_prob,
        packets_used=state.packets_used,
        saturated=True,
    )

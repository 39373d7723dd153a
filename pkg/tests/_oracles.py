"""Independent straight-line re-implementations used as test oracles.

Everything here is deliberately plain Python over lists: no numpy, no
imports from the package under test, so a defect in the engine cannot
hide in a shared code path.
"""

import math

ZERO_EPS = 1e-12


def naive_mean(rows):
    """Two-pass component-wise mean of a list of equal-length vectors."""
    n = len(rows[0])
    sums = [0.0] * n
    for row in rows:
        for j in range(n):
            sums[j] += row[j]
    return [s / len(rows) for s in sums]


def naive_distances(received, refs):
    """Euclidean distance of (position, value) pairs to each reference."""
    out = []
    for ref in refs:
        total = 0.0
        for pos, val in received:
            diff = val - ref[pos]
            total += diff * diff
        out.append(math.sqrt(total))
    return out


def naive_weights(distances):
    """Inverse-distance weights with the documented degenerate rules."""
    k = len(distances)
    if any(d <= ZERO_EPS for d in distances):
        hits = [1.0 if d <= ZERO_EPS else 0.0 for d in distances]
        total = sum(hits)
        return [h / total for h in hits]
    r = max(distances)
    if min(distances) == r:
        return [1.0 / k] * k
    raw = [((r - d) / (r * d)) ** 2 for d in distances]
    total = sum(raw)
    return [w / total for w in raw]


def naive_update(probs, weights):
    mixed = [p + w for p, w in zip(probs, weights)]
    total = sum(mixed)
    return [m / total for m in mixed]


def naive_trajectory(refs, values, order):
    """Posterior after each packet for a fixed feature order.

    refs: list of reference vectors; values: the transmitted identity's
    feature values; order: the positions in transmission order. Returns
    one probability list per packet.
    """
    k = len(refs)
    probs = [1.0 / k] * k
    received = []
    out = []
    for pos in order:
        received.append((pos, values[pos]))
        weights = naive_weights(naive_distances(received, refs))
        probs = naive_update(probs, weights)
        out.append(list(probs))
    return out

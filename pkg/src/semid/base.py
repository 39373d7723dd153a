"""Identities, semantic elements and the shared semantic base.

An identity is an ordered vector of N feature values describing one message.
Identities that share a label form a semantic element, represented by its
mean reference vector. The semantic base bundles all elements and their
member identities and is the knowledge both endpoints must agree on before
an identification dialogue can run.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

__all__ = [
    "Identity",
    "SemanticElement",
    "SemanticBase",
    "FeaturePacket",
    "packet_bits",
    "dedup_identities",
    "build_semantic_base",
    "load_feature_csv",
    "save_feature_csv",
]

# Relative tolerance for the stored-reference vs recomputed-mean invariant.
REFERENCE_RTOL = 1e-12


def _as_feature_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise DataError("identity features must be a non-empty 1-D vector")
    if not np.isfinite(arr).all():
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise DataError(f"non-finite feature value at position {bad}")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Identity:
    """Ordered vector of feature values, optionally tagged with its label.

    The label names the semantic element the identity belongs to; it is
    optional because the transmitting side only needs the values.
    """

    features: np.ndarray
    label: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "features", _as_feature_array(self.features))
        if self.label is not None:
            if not self.label:
                raise DataError("identity label must be non-empty when present")
            if "," in self.label:
                raise DataError(f"identity label {self.label!r} contains a comma")

    @property
    def n_features(self) -> int:
        return int(self.features.shape[0])

    def key(self) -> bytes:
        """Bit-exact content key used for duplicate collapsing."""
        return self.features.tobytes()


@dataclass(frozen=True)
class SemanticElement:
    """One cluster of identities plus its mean reference vector."""

    id: int
    name: str
    member_count: int
    reference: Identity

    def __post_init__(self):
        if self.member_count < 1:
            raise DataError(f"element {self.name!r} has no members")


@dataclass(frozen=True)
class FeaturePacket:
    """Atomic on-air unit: one feature value and its position."""

    position: int
    value: float

    def __post_init__(self):
        if self.position < 0:
            raise DataError(f"packet position {self.position} is negative")
        if not np.isfinite(self.value):
            raise DataError(f"packet value at position {self.position} is not finite")


def packet_bits(n_features: int, q: int) -> int:
    """Ideal size in bits of one feature packet: position index plus value."""
    if n_features < 1:
        raise DataError("n_features must be >= 1")
    return (n_features - 1).bit_length() + q


@dataclass(frozen=True)
class SemanticBase:
    """Immutable shared knowledge: elements, references and member identities.

    Element ids are dense 0..K-1 in sorted-label order so independently
    constructed bases agree. Instances are safe to share read-only across
    concurrent identification sessions.
    """

    n_features: int
    q: int
    elements: tuple[SemanticElement, ...]
    identities: tuple[tuple[Identity, ...], ...]
    _reference_matrix: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        refs = np.stack([e.reference.features for e in self.elements])
        refs.flags.writeable = False
        object.__setattr__(self, "_reference_matrix", refs)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def reference_matrix(self) -> np.ndarray:
        """K x N array of reference vectors, row k for element id k."""
        return self._reference_matrix

    @property
    def total_identities(self) -> int:
        return sum(len(group) for group in self.identities)

    def element_by_name(self, name: str) -> SemanticElement:
        for elem in self.elements:
            if elem.name == name:
                return elem
        raise KeyError(name)

    def canonical_bytes(self) -> bytes:
        """Deterministic serialization used for the synchronization digest.

        Layout: header (N, q, K), then per element in id order the label,
        member count, reference vector and member vectors, all integers and
        IEEE-754 doubles big-endian.
        """
        out = [b"SEMIDBASE\x01", struct.pack(">IHI", self.n_features, self.q, self.n_elements)]
        for elem, members in zip(self.elements, self.identities):
            name = elem.name.encode("utf-8")
            out.append(struct.pack(">I", len(name)))
            out.append(name)
            out.append(struct.pack(">I", elem.member_count))
            out.append(struct.pack(f">{self.n_features}d", *elem.reference.features))
            for ident in members:
                out.append(struct.pack(f">{self.n_features}d", *ident.features))
        return b"".join(out)


def dedup_identities(identities: list[Identity]) -> list[Identity]:
    """Collapse bit-exact duplicate feature vectors, keeping first occurrence.

    Two messages whose feature vectors agree in every position map to the
    same identity; near-equal vectors stay distinct.
    """
    if not identities:
        return []
    n = identities[0].n_features
    seen: set[bytes] = set()
    out: list[Identity] = []
    for idx, ident in enumerate(identities):
        if ident.n_features != n:
            raise DataError(
                f"dimension mismatch: expected {n} features, got {ident.n_features}",
                record_index=idx,
            )
        key = ident.key()
        if key not in seen:
            seen.add(key)
            out.append(ident)
    return out


def build_semantic_base(labeled_identities: list[Identity], q: int) -> SemanticBase:
    """Group labeled identities into elements and compute their references.

    Duplicate feature vectors are collapsed first; a duplicate that appears
    under two different labels is rejected because one identity cannot
    belong to two elements. Each reference is the component-wise mean of
    the surviving member identities.
    """
    if not labeled_identities:
        raise DataError("cannot build a semantic base from an empty identity list")
    if q < 1:
        raise DataError(f"q must be >= 1, got {q}")

    n = labeled_identities[0].n_features
    label_of_key: dict[bytes, str] = {}
    for idx, ident in enumerate(labeled_identities):
        if ident.label is None:
            raise DataError("identity has no label", record_index=idx)
        if ident.n_features != n:
            raise DataError(
                f"dimension mismatch: expected {n} features, got {ident.n_features}",
                record_index=idx,
            )
        key = ident.key()
        prev = label_of_key.setdefault(key, ident.label)
        if prev != ident.label:
            raise DataError(
                f"identical feature vector appears under labels {prev!r} and {ident.label!r}",
                record_index=idx,
            )

    deduped = dedup_identities(labeled_identities)
    groups: dict[str, list[Identity]] = {}
    for ident in deduped:
        groups.setdefault(ident.label, []).append(ident)

    elements = []
    member_groups = []
    for eid, label in enumerate(sorted(groups)):
        members = groups[label]
        matrix = np.stack([m.features for m in members])
        reference = Identity(matrix.mean(axis=0))
        elements.append(
            SemanticElement(id=eid, name=label, member_count=len(members), reference=reference)
        )
        member_groups.append(tuple(members))

    return SemanticBase(
        n_features=n,
        q=q,
        elements=tuple(elements),
        identities=tuple(member_groups),
    )


def _format_value(v: float) -> str:
    return f"{v:.17g}"


def save_feature_csv(identities: list[Identity], path, header_comments: list[str] | None = None):
    """Write identities to the shared feature file format.

    Comment lines (prefixed '#') go before the header row; readers skip
    them. Values are printed with 17 significant digits so the round trip
    is lossless for every finite float64.
    """
    if not identities:
        raise DataError("refusing to write an empty feature file")
    n = identities[0].n_features
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in header_comments or []:
            fh.write(f"# {line}\n")
        fh.write("label," + ",".join(f"f{i}" for i in range(n)) + "\n")
        for idx, ident in enumerate(identities):
            if ident.label is None:
                raise DataError("identity has no label", record_index=idx)
            if ident.n_features != n:
                raise DataError(
                    f"dimension mismatch: expected {n} features, got {ident.n_features}",
                    record_index=idx,
                )
            fh.write(ident.label + "," + ",".join(_format_value(v) for v in ident.features) + "\n")


def load_feature_csv(path) -> list[Identity]:
    """Read a feature file back into labeled identities.

    The header row fixes N; every row must match it. Errors carry the
    1-based data row index of the offending record.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]

    body = [ln for ln in lines if ln and not ln.startswith("#")]
    if not body:
        raise DataError(f"{path}: no header row found")

    header = body[0].split(",")
    expected = ["label"] + [f"f{i}" for i in range(len(header) - 1)]
    if header != expected:
        raise DataError(f"{path}: malformed header row {body[0]!r}")
    n = len(header) - 1
    if n < 1:
        raise DataError(f"{path}: header declares no feature columns")

    identities = []
    for row_idx, line in enumerate(body[1:], start=1):
        parts = line.split(",")
        if len(parts) != n + 1:
            raise DataError(
                f"expected {n + 1} columns, got {len(parts)}", record_index=row_idx
            )
        label = parts[0]
        if not label:
            raise DataError("empty label", record_index=row_idx)
        try:
            values = [float(p) for p in parts[1:]]
        except ValueError as exc:
            raise DataError(f"unparseable feature value ({exc})", record_index=row_idx)
        try:
            identities.append(Identity(np.array(values), label=label))
        except DataError as exc:
            raise DataError(str(exc), record_index=row_idx)
    if not identities:
        raise DataError(f"{path}: file contains a header but no data rows")
    return identities

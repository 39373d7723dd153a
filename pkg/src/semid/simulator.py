"""End-to-end runs, threshold sweeps and the accuracy/bit-cost tradeoff.

A single run drives one transmission against the receiver engine until the
confidence threshold stops it (or the sender saturates), and records how
many bits went over the air relative to sending the whole vector plainly.
Sweeps repeat this over a dataset and a threshold grid, aggregate accuracy
and bit-transmission ratio per threshold, and pick the threshold that
maximizes their gap.

Determinism: every run's seed derives from (master seed, identity index)
only, never from the threshold, so all thresholds see identical packet
orderings and identical posterior trajectories. Sweeps exploit this by
walking each identity's trajectory once and reading every threshold's stop
time off it; results are bit-identical to running each cell separately.
Aggregation always happens in dataset order.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .base import Identity, SemanticBase, packet_bits
from .errors import ConfigError, DataError
from .identifier import (
    Decision,
    check_stop,
    force_decision,
    init_posterior,
    receive_packet,
)
from .teacher import make_plan, next_packet

__all__ = [
    "RunRecord",
    "SweepRow",
    "SweepTable",
    "derive_run_seed",
    "default_threshold_grid",
    "run_once",
    "accuracy",
    "btr",
    "sweep",
    "optimize_lambda",
    "gen_synthetic",
    "write_sweep_outputs",
]


@dataclass(frozen=True)
class RunRecord:
    """Outcome and bit accounting of one identification run."""

    true_element: int
    decision: Decision
    threshold: float
    seed: int
    bits_semantic: int
    bits_syntactic: int

    @property
    def correct(self) -> bool:
        return self.decision.element_id == self.true_element


@dataclass(frozen=True)
class SweepRow:
    """Aggregates for one threshold value.

    degenerate flags thresholds at or below 1/K, where the very first
    packet already decides the run.
    """

    threshold: float
    accuracy: float
    mean_btr: float
    mean_packets: float
    mean_bits_semantic: float
    saturation_rate: float
    degenerate: bool


@dataclass(frozen=True)
class SweepTable:
    """Per-threshold aggregates over a whole dataset, sorted ascending."""

    n_features: int
    q: int
    n_runs: int
    master_seed: int
    rows: tuple[SweepRow, ...]


# Rejection-sampling budget for placing synthetic class centers.
PLACEMENT_ATTEMPTS_PER_CLASS = 200


def derive_run_seed(master_seed: int, identity_index: int) -> int:
    """Counter-based split: one child seed per dataset row.

    Independent of the threshold, so every threshold replays the same
    packet order for a given identity.
    """
    ss = np.random.SeedSequence([master_seed, identity_index])
    return int(ss.generate_state(1, np.uint64)[0])


def default_threshold_grid() -> tuple[float, ...]:
    """0.10 to 1.00 inclusive in steps of 0.02 (46 values)."""
    return tuple((10 + 2 * i) / 100 for i in range(46))


def run_once(
    base: SemanticBase,
    identity: Identity,
    true_element: int,
    threshold: float,
    seed: int,
) -> RunRecord:
    """One full transmission: send packets until the receiver stops.

    If all N features go out without reaching the threshold, the receiver
    decides anyway and the record is marked saturated.
    """
    if identity.n_features != base.n_features:
        raise DataError(
            f"identity has {identity.n_features} features, base expects {base.n_features}"
        )
    if not 0 <= true_element < base.n_elements:
        raise ConfigError(f"true element id {true_element} out of range")

    plan = make_plan(identity, seed)
    state = init_posterior(base)
    while True:
        packet = next_packet(plan)
        if packet is None:
            decision = force_decision(state)
            break
        state = receive_packet(state, packet, base)
        decision = check_stop(state, threshold)
        if decision is not None:
            break

    pbits = packet_bits(base.n_features, base.q)
    return RunRecord(
        true_element=true_element,
        decision=decision,
        threshold=threshold,
        seed=seed,
        bits_semantic=pbits * decision.packets_used,
        bits_syntactic=base.q * base.n_features,
    )


def accuracy(records: list[RunRecord]) -> float:
    """Fraction of correct identifications: 1 - errors/total."""
    if not records:
        raise ConfigError("accuracy of an empty record list is undefined")
    thresholds = {r.threshold for r in records}
    if len(thresholds) > 1:
        raise ConfigError(f"records mix thresholds {sorted(thresholds)}")
    errors = sum(1 for r in records if not r.correct)
    return 1.0 - errors / len(records)


def btr(record: RunRecord) -> float:
    """Bit transmission ratio of one run: semantic bits over syntactic bits.

    Values above 1 mean the packetized transmission cost more than sending
    the whole vector.
    """
    return record.bits_semantic / record.bits_syntactic


def _validate_grid(thresholds) -> tuple[float, ...]:
    grid = tuple(float(t) for t in thresholds)
    if not grid:
        raise ConfigError("threshold grid is empty")
    for t in grid:
        if not 0.0 < t <= 1.0:
            raise ConfigError(f"threshold {t} outside (0, 1]")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("threshold grid must be strictly ascending")
    return grid


def _true_element_ids(base: SemanticBase, dataset: list[Identity]) -> list[int]:
    by_name = {elem.name: elem.id for elem in base.elements}
    ids = []
    for idx, ident in enumerate(dataset):
        if ident.label is None:
            raise DataError("dataset identity has no label", record_index=idx)
        if ident.label not in by_name:
            raise DataError(f"label {ident.label!r} not present in base", record_index=idx)
        ids.append(by_name[ident.label])
    return ids


def _trajectory(base, identity, seed, stop_at):
    """Argmax element and leading probability after each packet.

    Stops early once the leading probability reaches stop_at (the largest
    threshold anyone will ask about); later packets cannot matter.
    """
    plan = make_plan(identity, seed)
    state = init_posterior(base)
    leaders, maxima = [], []
    while True:
        packet = next_packet(plan)
        if packet is None:
            break
        state = receive_packet(state, packet, base)
        leaders.append(state.argmax_element)
        maxima.append(state.max_prob)
        if state.max_prob >= stop_at:
            break
    return np.array(leaders), np.array(maxima)


def sweep(
    base: SemanticBase,
    dataset: list[Identity],
    thresholds,
    master_seed: int,
) -> SweepTable:
    """Run every (identity, threshold) cell and aggregate per threshold."""
    grid = _validate_grid(thresholds)
    if not dataset:
        raise DataError("dataset is empty")
    true_ids = _true_element_ids(base, dataset)

    n = base.n_features
    q = base.q
    pbits = packet_bits(n, q)
    n_grid = len(grid)
    errors = np.zeros(n_grid, dtype=np.int64)
    packet_sums = np.zeros(n_grid, dtype=np.int64)
    saturated_counts = np.zeros(n_grid, dtype=np.int64)

    grid_arr = np.array(grid)
    top = grid_arr[-1]
    for idx, (identity, true_id) in enumerate(zip(dataset, true_ids)):
        if identity.n_features != n:
            raise DataError(
                f"identity has {identity.n_features} features, base expects {n}",
                record_index=idx,
            )
        seed = derive_run_seed(master_seed, idx)
        leaders, maxima = _trajectory(base, identity, seed, top)
        # First packet whose leading probability clears each threshold. A
        # threshold nobody clears means the trajectory ran all N packets
        # (it only stops early once the top of the grid is cleared), so the
        # run saturates and decides at the last packet.
        crossed = maxima[:, None] >= grid_arr[None, :]
        any_crossing = crossed.any(axis=0)
        first = np.where(any_crossing, crossed.argmax(axis=0), len(maxima) - 1)
        decided = leaders[first]
        errors += decided != true_id
        packet_sums += first + 1
        saturated_counts += ~any_crossing

    count = len(dataset)
    rows = []
    for j, t in enumerate(grid):
        mean_packets = packet_sums[j] / count
        rows.append(
            SweepRow(
                threshold=t,
                accuracy=1.0 - errors[j] / count,
                mean_btr=(pbits / (q * n)) * mean_packets,
                mean_packets=mean_packets,
                mean_bits_semantic=pbits * mean_packets,
                saturation_rate=saturated_counts[j] / count,
                degenerate=t <= 1.0 / base.n_elements,
            )
        )
    return SweepTable(
        n_features=n, q=q, n_runs=count, master_seed=master_seed, rows=tuple(rows)
    )


def optimize_lambda(table: SweepTable) -> tuple[float, float, float]:
    """Threshold maximizing accuracy minus mean BTR; ties take the lowest.

    Returns (threshold, accuracy, mean_btr) of the winning row.
    """
    if not table.rows:
        raise ConfigError("cannot optimize over an empty sweep table")
    best = table.rows[0]
    best_gap = best.accuracy - best.mean_btr
    for row in table.rows[1:]:
        gap = row.accuracy - row.mean_btr
        if gap > best_gap:
            best, best_gap = row, gap
    return best.threshold, best.accuracy, best.mean_btr


def gen_synthetic(
    n_classes: int,
    n_features: int,
    per_class: int,
    spread: float,
    separation: float,
    seed: int,
) -> list[Identity]:
    """Labeled Gaussian clusters standing in for extracted features.

    Class centers are drawn in random directions and rejection-checked to
    sit pairwise at least `separation` apart; members add isotropic noise
    with standard deviation `spread`. Labels sort in class order.
    """
    if n_classes < 1 or n_features < 1 or per_class < 1:
        raise ConfigError("n_classes, n_features and per_class must all be >= 1")
    if spread < 0 or separation < 0:
        raise ConfigError("spread and separation must be nonnegative")

    rng = np.random.default_rng(seed)
    # Wider shells in low dimensions keep the rejection loop feasible.
    if separation > 0:
        sigma = separation * max(1.0, n_classes ** (1.0 / n_features))
    else:
        sigma = spread if spread > 0 else 1.0

    centers: list[np.ndarray] = []
    attempts = 0
    max_attempts = PLACEMENT_ATTEMPTS_PER_CLASS * n_classes
    while len(centers) < n_classes:
        if attempts >= max_attempts:
            raise ConfigError(
                f"could not place {n_classes} centers pairwise {separation} apart "
                f"in {n_features} dimensions after {max_attempts} draws"
            )
        attempts += 1
        candidate = rng.normal(0.0, sigma, n_features)
        if all(float(np.linalg.norm(candidate - c)) >= separation for c in centers):
            centers.append(candidate)

    width = len(str(n_classes - 1))
    identities = []
    for k, center in enumerate(centers):
        label = f"class{k:0{width}d}"
        noise = rng.normal(0.0, spread, (per_class, n_features)) if spread > 0 else 0.0
        members = center + noise if spread > 0 else np.tile(center, (per_class, 1))
        for row in members:
            identities.append(Identity(row, label=label))
    return identities


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{value:.17g}"


def _write_csv(path: Path, header_lines, columns, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_sweep_outputs(
    table: SweepTable, out_dir, header_lines: list[str] | None = None
) -> dict[str, Path]:
    """Emit the plot-ready tables and the optimization summary.

    Five files: the full per-threshold table, accuracy vs threshold,
    transmitted bits (semantic mean vs syntactic constant), BTR with the
    break-even reference line, and the single-row optimum summary. Numbers
    carry 17 significant digits so rereads are exact.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header_lines = header_lines or []
    bits_syntactic = table.q * table.n_features

    paths = {}

    paths["sweep"] = out / "sweep.csv"
    _write_csv(
        paths["sweep"],
        header_lines,
        [
            "lambda",
            "accuracy",
            "mean_btr",
            "mean_packets",
            "mean_bits_semantic",
            "saturation_rate",
            "degenerate",
        ],
        [
            (
                r.threshold,
                r.accuracy,
                r.mean_btr,
                r.mean_packets,
                r.mean_bits_semantic,
                r.saturation_rate,
                r.degenerate,
            )
            for r in table.rows
        ],
    )

    paths["accuracy"] = out / "accuracy.csv"
    _write_csv(
        paths["accuracy"],
        header_lines,
        ["lambda", "accuracy"],
        [(r.threshold, r.accuracy) for r in table.rows],
    )

    paths["bits"] = out / "bits.csv"
    _write_csv(
        paths["bits"],
        header_lines,
        ["lambda", "mean_bits_semantic", "bits_syntactic"],
        [(r.threshold, r.mean_bits_semantic, bits_syntactic) for r in table.rows],
    )

    paths["btr"] = out / "btr.csv"
    _write_csv(
        paths["btr"],
        header_lines,
        ["lambda", "mean_btr", "break_even"],
        [(r.threshold, r.mean_btr, 1.0) for r in table.rows],
    )

    threshold, acc, opt_btr = optimize_lambda(table)
    paths["summary"] = out / "summary.csv"
    _write_csv(
        paths["summary"],
        header_lines,
        ["n_features", "lambda_opt", "accuracy", "btr"],
        [(table.n_features, threshold, acc, opt_btr)],
    )
    return paths

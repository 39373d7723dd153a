"""Identification of semantic elements from partially transmitted features.

A sender reveals randomly chosen features of an identity vector one packet
at a time; the receiver weighs candidate elements by inverse distance over
the features seen so far, updates a posterior, and stops once a confidence
threshold is met. The package provides the data model, both endpoint
engines, an in-process simulator with threshold sweeps, a byte-stream wire
protocol, and a CLI.
"""

from .base import (
    FeaturePacket,
    Identity,
    SemanticBase,
    SemanticElement,
    build_semantic_base,
    dedup_identities,
    load_feature_csv,
    packet_bits,
    save_feature_csv,
)
from .errors import ConfigError, DataError, IOFailure, ProtocolError, SemIdError
from .identifier import (
    Decision,
    PosteriorState,
    check_stop,
    force_decision,
    idw_weights,
    init_posterior,
    partial_distances,
    receive_packet,
    update_posterior,
)
from .simulator import (
    RunRecord,
    SweepRow,
    SweepTable,
    accuracy,
    btr,
    default_threshold_grid,
    derive_run_seed,
    gen_synthetic,
    optimize_lambda,
    run_once,
    sweep,
    write_sweep_outputs,
)
from .teacher import TransmitPlan, make_plan, next_packet

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "Identity",
    "SemanticElement",
    "SemanticBase",
    "FeaturePacket",
    "packet_bits",
    "build_semantic_base",
    "dedup_identities",
    "load_feature_csv",
    "save_feature_csv",
    "PosteriorState",
    "Decision",
    "init_posterior",
    "partial_distances",
    "idw_weights",
    "update_posterior",
    "receive_packet",
    "check_stop",
    "force_decision",
    "TransmitPlan",
    "make_plan",
    "next_packet",
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
    "SemIdError",
    "ConfigError",
    "DataError",
    "ProtocolError",
    "IOFailure",
]

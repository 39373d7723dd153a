"""Command-line entry point: data generation, sweeps and networked sessions.

Subcommands:
    gen         write a synthetic labeled feature CSV
    sweep       run a threshold sweep over a feature CSV, emit plot tables
    teacher     transmit one identity to a connected apprentice
    apprentice  receive features and print the identification decision

Every output artifact embeds the resolved configuration in '#' header
lines, so re-running a command with the same configuration reproduces the
bytes exactly. Exit codes: 0 success, 2 configuration, 3 data, 4 protocol,
5 I/O. Set SEMID_LOG=debug|info|warning to adjust logging.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import socket
import sys
import time

from . import __version__
from .base import build_semantic_base, load_feature_csv, packet_bits, save_feature_csv
from .errors import ConfigError, IOFailure, SemIdError
from .protocol import (
    Feature,
    Hello,
    Saturated,
    SocketStream,
    apprentice_session,
    base_digest,
    frame_size,
    teacher_session,
)
from .simulator import (
    default_threshold_grid,
    gen_synthetic,
    optimize_lambda,
    sweep,
    write_sweep_outputs,
)
from .teacher import make_plan

log = logging.getLogger("semid")


def _config_dict(args: argparse.Namespace) -> dict:
    skip = {"func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _header_lines(args: argparse.Namespace) -> list[str]:
    return [
        f"semid {__version__} {args.command}",
        "config: " + json.dumps(_config_dict(args), sort_keys=True, separators=(",", ":")),
    ]


def _parse_endpoint(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise ConfigError(f"endpoint {text!r} is not host:port")
    try:
        return host, int(port)
    except ValueError:
        raise ConfigError(f"endpoint {text!r} has a non-numeric port")


def _open_stream(args: argparse.Namespace) -> SocketStream:
    if bool(args.listen) == bool(args.connect):
        raise ConfigError("exactly one of --listen or --connect is required")
    if args.listen:
        host, port = _parse_endpoint(args.listen)
        server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        try:
            server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            server.bind((host, port))
            server.listen(1)
            log.info("listening on %s:%d", host, port)
            conn, peer = server.accept()
            log.info("accepted connection from %s:%d", *peer)
        except OSError as exc:
            raise IOFailure(f"listen on {args.listen} failed: {exc}")
        finally:
            server.close()
        return SocketStream(conn)
    host, port = _parse_endpoint(args.connect)
    deadline = time.monotonic() + args.connect_timeout
    while True:
        try:
            sock = socket.create_connection((host, port), timeout=args.connect_timeout)
            log.info("connected to %s:%d", host, port)
            return SocketStream(sock)
        except ConnectionRefusedError:
            if time.monotonic() >= deadline:
                raise IOFailure(f"connection to {args.connect} refused")
            time.sleep(0.05)
        except OSError as exc:
            raise IOFailure(f"connect to {args.connect} failed: {exc}")


def _load_base(args: argparse.Namespace):
    try:
        identities = load_feature_csv(args.data)
    except OSError as exc:
        raise IOFailure(f"cannot read {args.data}: {exc}")
    return identities, build_semantic_base(identities, q=args.q)


def cmd_gen(args: argparse.Namespace) -> int:
    identities = gen_synthetic(
        n_classes=args.gen_k,
        n_features=args.gen_n,
        per_class=args.gen_per_class,
        spread=args.gen_spread,
        separation=args.gen_sep,
        seed=args.seed,
    )
    comments = _header_lines(args)
    if args.gen_spread == 0:
        comments.append(
            "note: spread=0 makes all members of a class identical; they collapse "
            "to one identity per class when the semantic base is built"
        )
    try:
        save_feature_csv(identities, args.out, header_comments=comments)
    except OSError as exc:
        raise IOFailure(f"cannot write {args.out}: {exc}")
    print(f"wrote {len(identities)} identities ({args.gen_k} classes x "
          f"{args.gen_per_class} members, N={args.gen_n}) to {args.out}")
    return 0


def _threshold_grid(args: argparse.Namespace) -> tuple[float, ...]:
    if args.threshold is not None:
        return (args.threshold,)
    lo, hi, step = args.lambda_min, args.lambda_max, args.lambda_step
    if step <= 0:
        raise ConfigError(f"--lambda-step must be positive, got {step}")
    if hi < lo:
        raise ConfigError(f"--lambda-max {hi} below --lambda-min {lo}")
    if (lo, hi, step) == (0.10, 1.00, 0.02):
        return default_threshold_grid()
    count = int(round((hi - lo) / step)) + 1
    grid = tuple(lo + i * step for i in range(count))
    return tuple(t for t in grid if t <= hi + 1e-12)


def cmd_sweep(args: argparse.Namespace) -> int:
    identities, base = _load_base(args)
    grid = _threshold_grid(args)
    table = sweep(base, identities, grid, master_seed=args.seed)
    paths = write_sweep_outputs(table, args.out, header_lines=_header_lines(args))
    threshold, acc, opt_btr = optimize_lambda(table)
    print(f"runs: {table.n_runs} identities x {len(grid)} thresholds "
          f"(N={base.n_features}, q={base.q}, K={base.n_elements})")
    degenerate = [r.threshold for r in table.rows if r.degenerate]
    if degenerate:
        print(f"note: {len(degenerate)} threshold(s) at or below 1/K={1 / base.n_elements:.4g}; "
              "the first packet already decides those runs")
    print(f"lambda_opt={threshold:.17g} accuracy={acc:.17g} btr={opt_btr:.17g}")
    for name in ("sweep", "accuracy", "bits", "btr", "summary"):
        print(f"wrote {paths[name]}")
    return 0


def cmd_teacher(args: argparse.Namespace) -> int:
    identities, base = _load_base(args)
    if not 0 <= args.row < len(identities):
        raise ConfigError(f"--row {args.row} out of range (dataset has {len(identities)} rows)")
    identity = identities[args.row]
    plan = make_plan(identity, args.seed)
    stream = _open_stream(args)
    try:
        report = teacher_session(plan, base, stream)
    finally:
        stream.close()
    print(f"base digest: {base_digest(base).hex()}")
    print(f"features sent: {report.features_sent} of {base.n_features}"
          + (" (saturated)" if report.saturated else ""))
    print(f"peer decision: element {report.stop.element_id} "
          f"confidence {report.stop.confidence:.17g}")
    return 0


def cmd_apprentice(args: argparse.Namespace) -> int:
    identities, base = _load_base(args)
    stream = _open_stream(args)
    try:
        decision = apprentice_session(base, args.threshold, stream)
    finally:
        stream.close()

    element = base.elements[decision.element_id]
    pbits = packet_bits(base.n_features, base.q)
    bits_semantic = pbits * decision.packets_used
    bits_syntactic = base.q * base.n_features
    hello_bytes = frame_size(Hello(base.n_features, base.q, base.n_elements, base_digest(base)))
    feature_bytes = frame_size(Feature(0, 0.0))
    framed_bytes = hello_bytes + feature_bytes * decision.packets_used
    if decision.saturated:
        framed_bytes += frame_size(Saturated())

    print(f"decision: element {decision.element_id} ({element.name})")
    print(f"confidence: {decision.confidence:.17g}")
    print(f"packets used: {decision.packets_used} of {base.n_features}"
          + (" (saturated)" if decision.saturated else ""))
    print(f"bits semantic (ideal): {bits_semantic}")
    print(f"bits syntactic: {bits_syntactic}")
    print(f"btr: {bits_semantic / bits_syntactic:.17g}")
    print(f"framed bytes received: {framed_bytes}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semid",
        description="Identify semantic elements from partially transmitted feature vectors.",
    )
    parser.add_argument("--version", action="version", version=f"semid {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic labeled feature CSV")
    gen.add_argument("--gen-k", type=int, default=10, help="number of classes")
    gen.add_argument("--gen-n", type=int, default=64, help="features per identity")
    gen.add_argument("--gen-per-class", type=int, default=100, help="members per class")
    gen.add_argument("--gen-spread", type=float, default=1.0, help="within-class stddev")
    gen.add_argument("--gen-sep", type=float, default=10.0, help="minimum distance between class centers")
    gen.add_argument("--seed", type=int, default=0, help="master RNG seed")
    gen.add_argument("--out", required=True, help="output CSV path")
    gen.set_defaults(func=cmd_gen)

    swp = sub.add_parser("sweep", help="sweep thresholds over a dataset and emit tables")
    swp.add_argument("--data", required=True, help="feature CSV path")
    swp.add_argument("--q", type=int, default=64, help="bits per feature value")
    swp.add_argument("--seed", type=int, default=0, help="master RNG seed")
    swp.add_argument("--lambda", dest="threshold", type=float, default=None,
                     help="single threshold instead of a grid")
    swp.add_argument("--lambda-min", type=float, default=0.10)
    swp.add_argument("--lambda-max", type=float, default=1.00)
    swp.add_argument("--lambda-step", type=float, default=0.02)
    swp.add_argument("--out", required=True, help="output directory for the CSV tables")
    swp.set_defaults(func=cmd_sweep)

    tch = sub.add_parser("teacher", help="transmit one identity over TCP")
    tch.add_argument("--data", required=True, help="feature CSV path (shared base)")
    tch.add_argument("--q", type=int, default=64)
    tch.add_argument("--row", type=int, default=0, help="dataset row to transmit")
    tch.add_argument("--seed", type=int, default=0, help="seed for the feature ordering")
    tch.add_argument("--listen", default=None, metavar="HOST:PORT")
    tch.add_argument("--connect", default=None, metavar="HOST:PORT")
    tch.add_argument("--connect-timeout", type=float, default=5.0)
    tch.set_defaults(func=cmd_teacher)

    app = sub.add_parser("apprentice", help="receive features over TCP and decide")
    app.add_argument("--data", required=True, help="feature CSV path (shared base)")
    app.add_argument("--q", type=int, default=64)
    app.add_argument("--lambda", dest="threshold", type=float, required=True,
                     help="confidence threshold in (0, 1]")
    app.add_argument("--listen", default=None, metavar="HOST:PORT")
    app.add_argument("--connect", default=None, metavar="HOST:PORT")
    app.add_argument("--connect-timeout", type=float, default=5.0)
    app.set_defaults(func=cmd_apprentice)

    return parser


def main(argv=None) -> int:
    level = os.environ.get("SEMID_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SemIdError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return IOFailure.exit_code


if __name__ == "__main__":
    sys.exit(main())

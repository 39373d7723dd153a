"""featx command line: extract penultimate CNN activations to a CSV."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import ExtractionConfig, ExtractorError
from .export import extract


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featx",
        description="Export penultimate-layer image-classifier activations "
        "as a labeled feature CSV (Imagenette directory layout).",
    )
    parser.add_argument("dataset", help="dataset root containing train/ and val/")
    parser.add_argument("--n-features", type=int, required=True,
                        help="exported feature width (5 or 32..2048)")
    parser.add_argument("--epochs", type=int, default=2, help="fine-tune epochs (0 skips)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True, help="output CSV path")
    parser.add_argument("--split", choices=("train", "val", "all"), default="val",
                        help="which images to export")
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--learning-rate", type=float, default=1e-3)
    parser.add_argument("--no-pretrained", action="store_true",
                        help="start from random backbone weights (no download)")
    parser.add_argument("--weights", default=None,
                        help="local ResNet-50 state-dict path instead of downloading")
    parser.add_argument("--train-backbone", action="store_true",
                        help="unfreeze the backbone during fine-tuning")
    return parser


def main(argv=None) -> int:
    level = os.environ.get("FEATX_LOG", "info").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        config = ExtractionConfig(
            dataset_dir=args.dataset,
            n_features=args.n_features,
            out_path=args.out,
            epochs=args.epochs,
            seed=args.seed,
            split=args.split,
            batch_size=args.batch_size,
            device=args.device,
            pretrained=not args.no_pretrained,
            weights_path=args.weights,
            train_backbone=args.train_backbone,
            learning_rate=args.learning_rate,
        )
        path = extract(config)
    except ExtractorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 5
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

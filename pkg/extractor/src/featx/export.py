"""Run extraction end to end and write the shared feature CSV.

Output format (consumed unchanged by the identification package): optional
'#' comment lines carrying the configuration, a header row
label,f0,...,f{N-1}, then one row per image with the class name and the
penultimate activations printed at 17 significant digits.
"""

from __future__ import annotations

import json
import logging

import torch
from torch.utils.data import DataLoader

from .config import DatasetError, ExtractionConfig
from .data import eval_transform, load_split
from .model import build_model
from .train import fine_tune, seed_everything

log = logging.getLogger("featx")


def extract(config: ExtractionConfig) -> str:
    """Fine-tune, export activations for the chosen split, return the path."""
    seed_everything(config.seed)
    dataset, classes = load_split(config.dataset_dir, config.split, eval_transform())
    if len(dataset) == 0:
        raise DatasetError(f"split {config.split!r} of {config.dataset_dir} is empty")

    model = build_model(
        config.n_features,
        num_classes=len(classes),
        pretrained=config.pretrained,
        weights_path=config.weights_path,
    )
    model = fine_tune(model, config)

    device = torch.device(config.device)
    model.to(device)
    model.eval()
    loader = DataLoader(dataset, batch_size=config.batch_size, shuffle=False, num_workers=0)

    header = "label," + ",".join(f"f{i}" for i in range(config.n_features))
    rows_written = 0
    with open(config.out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# featx extract\n")
        fh.write("# config: " + json.dumps(config.as_dict(), sort_keys=True,
                                           separators=(",", ":")) + "\n")
        fh.write(header + "\n")
        with torch.no_grad():
            for images, targets in loader:
                feats = model.features(images.to(device)).cpu()
                if feats.shape[1] != config.n_features:
                    raise DatasetError(
                        f"model emitted width {feats.shape[1]}, expected {config.n_features}"
                    )
                if not torch.isfinite(feats).all():
                    raise DatasetError("non-finite activation in export batch")
                for row, target in zip(feats, targets):
                    label = classes[int(target)]
                    fh.write(label + "," + ",".join(f"{v:.17g}" for v in row.tolist()) + "\n")
                    rows_written += 1
    log.info("wrote %d rows x %d features to %s", rows_written, config.n_features,
             config.out_path)
    return config.out_path

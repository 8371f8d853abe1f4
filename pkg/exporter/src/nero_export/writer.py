"""Writes the artifact-bundle directory layout the analysis toolkit reads.

Kept self-contained on purpose: the bundle format (manifest.json plus five
headerless CSV files, floats as shortest round-trip decimals, LF endings)
is the contract between the two packages.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

BUNDLE_FILES = {
    "features": "features.csv",
    "logits": "logits.csv",
    "labels": "labels.csv",
    "weights": "weights.csv",
    "bias": "bias.csv",
}


def _write_float_matrix(path: Path, values: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in np.asarray(values, dtype=np.float64):
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


def write_bundle_dir(
    path: Path,
    features: np.ndarray,
    logits: np.ndarray,
    labels: np.ndarray,
    weights: np.ndarray,
    bias: np.ndarray,
    class_names: list[str],
    split: str,
    metadata: dict,
) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    n, d = features.shape
    n_classes = weights.shape[1]
    manifest = {
        "n": int(n),
        "d": int(d),
        "C": int(n_classes),
        "split": split,
        "class_names": list(class_names),
        "files": dict(BUNDLE_FILES),
        "metadata": metadata,
    }
    (path / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _write_float_matrix(path / BUNDLE_FILES["features"], features)
    _write_float_matrix(path / BUNDLE_FILES["logits"], logits)
    with open(path / BUNDLE_FILES["labels"], "w", encoding="utf-8", newline="\n") as fh:
        for v in labels:
            fh.write(f"{int(v)}\n")
    _write_float_matrix(path / BUNDLE_FILES["weights"], weights)
    _write_float_matrix(path / BUNDLE_FILES["bias"], np.asarray(bias, dtype=np.float64).reshape(1, -1))

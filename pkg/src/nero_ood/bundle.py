"""On-disk model-artifact bundles.

A bundle is one data split's view of a frozen classifier: penultimate-layer
features, logits, integer labels, and the final layer's weights and bias.
Everything downstream (detectors, baselines, evaluation) consumes only this.

Directory layout::

    manifest.json   {"n", "d", "C", "split", "class_names", "files", ...}
    features.csv    n rows x d floats
    logits.csv      n rows x C floats
    labels.csv      n rows, one integer each (-1 marks OOD samples)
    weights.csv     d rows x C floats (row j = neuron j, column c = class c)
    bias.csv        1 row x C floats

Floats are stored as shortest round-trip decimals, so load(write(b))
reproduces b bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import csvio
from .errors import (
    DataError,
    DimensionMismatch,
    EmptyClass,
    IoError,
    LabelOutOfRange,
    MissingFile,
    NonFiniteValue,
    ParseError,
)

SPLIT_TAGS = ("train", "test_id", "test_ood")

BUNDLE_FILES = {
    "features": "features.csv",
    "logits": "logits.csv",
    "labels": "labels.csv",
    "weights": "weights.csv",
    "bias": "bias.csv",
}


@dataclass
class ArtifactBundle:
    """One split's features, logits, labels, and final-layer parameters.

    Instances are plain containers; ``validate_bundle`` enforces the schema
    invariants and is called by ``load_bundle`` and ``write_bundle``.
    In-memory bundles with n = 0 are permitted (batch operations return
    empty results for them) but cannot be written to disk.
    """

    features: np.ndarray  # (n, d) float64
    logits: np.ndarray  # (n, C) float64
    labels: np.ndarray  # (n,) int64
    weights: np.ndarray  # (d, C) float64
    bias: np.ndarray  # (C,) float64
    class_names: list[str]
    split_tag: str
    metadata: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def d(self) -> int:
        return int(self.weights.shape[0])

    @property
    def n_classes(self) -> int:
        return int(self.weights.shape[1])


@dataclass(frozen=True)
class ConsistencyReport:
    """Per-sample residuals of (features @ weights + bias) against logits."""

    residuals: np.ndarray  # (n,) max-abs residual per sample
    tol: float
    consistent: bool


def validate_bundle(b: ArtifactBundle) -> None:
    """Raise a DataError subclass if the bundle violates any invariant."""
    for name in ("features", "logits", "weights"):
        arr = getattr(b, name)
        if arr.ndim != 2:
            raise DimensionMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    if b.labels.ndim != 1:
        raise DimensionMismatch(f"labels must be 1-D, got shape {b.labels.shape}")
    if b.bias.ndim != 1:
        raise DimensionMismatch(f"bias must be 1-D, got shape {b.bias.shape}")

    n, d = b.features.shape
    d_w, n_classes = b.weights.shape
    if n < 1:
        raise DimensionMismatch("bundle must contain at least one sample")
    if d < 1:
        raise DimensionMismatch("feature dimension must be at least 1")
    if n_classes < 2:
        raise DimensionMismatch("bundle must describe at least 2 classes")
    if d_w != d:
        raise DimensionMismatch(
            f"weights have {d_w} rows but features have {d} columns"
        )
    if b.logits.shape != (n, n_classes):
        raise DimensionMismatch(
            f"logits shape {b.logits.shape} does not match (n={n}, C={n_classes})"
        )
    if b.labels.shape != (n,):
        raise DimensionMismatch(
            f"labels shape {b.labels.shape} does not match n={n}"
        )
    if b.bias.shape != (n_classes,):
        raise DimensionMismatch(
            f"bias shape {b.bias.shape} does not match C={n_classes}"
        )
    if len(b.class_names) != n_classes:
        raise DimensionMismatch(
            f"{len(b.class_names)} class names for C={n_classes} classes"
        )
    if b.split_tag not in SPLIT_TAGS:
        raise DataError(f"split_tag must be one of {SPLIT_TAGS}, got {b.split_tag!r}")

    for name in ("features", "logits", "weights", "bias"):
        arr = getattr(b, name)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteValue(f"{name} contains NaN or Inf")

    bad = (b.labels < -1) | (b.labels >= n_classes)
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise LabelOutOfRange(
            f"label {int(b.labels[idx])} at row {idx} outside {{-1}} u {{0..{n_classes - 1}}}"
        )
    if b.split_tag == "train":
        if np.any(b.labels == -1):
            raise LabelOutOfRange("train split must not contain -1 labels")
        present = np.unique(b.labels)
        missing = sorted(set(range(n_classes)) - set(int(v) for v in present))
        if missing:
            raise EmptyClass(f"train split has no samples for classes {missing}")


def load_bundle(path: Path | str) -> ArtifactBundle:
    """Read and validate a bundle directory.

    Any disagreement between the manifest and the file contents is an
    error, never a silent truncation.
    """
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.is_file():
        raise MissingFile(f"missing file: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"invalid JSON: {exc.msg}", path=manifest_path, line=exc.lineno, column=exc.colno
        ) from None

    for key in ("n", "d", "C", "split", "class_names", "files"):
        if key not in manifest:
            raise ParseError(f"manifest missing required key {key!r}", path=manifest_path)
    n, d, n_classes = int(manifest["n"]), int(manifest["d"]), int(manifest["C"])
    files = manifest["files"]

    def resolve(kind: str) -> Path:
        if kind not in files:
            raise ParseError(f"manifest 'files' missing entry {kind!r}", path=manifest_path)
        return path / files[kind]

    features = csvio.read_float_matrix(resolve("features"))
    logits = csvio.read_float_matrix(resolve("logits"))
    labels = csvio.read_int_vector(resolve("labels"))
    weights = csvio.read_float_matrix(resolve("weights"))
    bias_rows = csvio.read_float_matrix(resolve("bias"))

    def check_shape(name: str, found: tuple, expected: tuple) -> None:
        if found != expected:
            raise DimensionMismatch(
                f"{name}: manifest expects shape {expected}, found {found}"
            )

    check_shape("features.csv", tuple(features.shape), (n, d))
    check_shape("logits.csv", tuple(logits.shape), (n, n_classes))
    check_shape("labels.csv", tuple(labels.shape), (n,))
    check_shape("weights.csv", tuple(weights.shape), (d, n_classes))
    check_shape("bias.csv", tuple(bias_rows.shape), (1, n_classes))

    bundle = ArtifactBundle(
        features=features,
        logits=logits,
        labels=labels,
        weights=weights,
        bias=bias_rows[0],
        class_names=[str(s) for s in manifest["class_names"]],
        split_tag=str(manifest["split"]),
        metadata=dict(manifest.get("metadata", {})),
    )
    validate_bundle(bundle)
    return bundle


def write_bundle(b: ArtifactBundle, path: Path | str) -> None:
    """Write a validated bundle to a directory (created if needed)."""
    validate_bundle(b)
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        manifest = {
            "n": b.n,
            "d": b.d,
            "C": b.n_classes,
            "split": b.split_tag,
            "class_names": list(b.class_names),
            "files": dict(BUNDLE_FILES),
        }
        if b.metadata:
            manifest["metadata"] = b.metadata
        (path / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        csvio.write_float_matrix(path / BUNDLE_FILES["features"], b.features)
        csvio.write_float_matrix(path / BUNDLE_FILES["logits"], b.logits)
        csvio.write_int_vector(path / BUNDLE_FILES["labels"], b.labels)
        csvio.write_float_matrix(path / BUNDLE_FILES["weights"], b.weights)
        csvio.write_float_matrix(path / BUNDLE_FILES["bias"], b.bias.reshape(1, -1))
    except OSError as exc:
        raise IoError(f"cannot write bundle to {path}: {exc}") from exc


def validate_consistency(b: ArtifactBundle, tol: float = 1e-4) -> ConsistencyReport:
    """Report how well stored logits match features @ weights + bias.

    Purely advisory: exporters running in float32 produce residuals around
    1e-5, which the default tolerance accepts.
    """
    recomputed = b.features @ b.weights + b.bias
    diff = np.abs(recomputed - b.logits)
    residuals = diff.max(axis=1) if b.n > 0 else np.zeros(0)
    consistent = bool(np.all(residuals <= tol)) if b.n > 0 else True
    return ConsistencyReport(residuals=residuals, tol=float(tol), consistent=consistent)

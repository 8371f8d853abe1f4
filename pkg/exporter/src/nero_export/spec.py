"""Export job description: checkpoint, layer, dataset, split mapping."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ExportError


@dataclass(frozen=True)
class ExportSpec:
    """One export job.

    ``id_classes`` lists the dataset's original labels that are
    in-distribution, in the order matching the model head's outputs
    (original label id_classes[c] maps to bundle class c). ``ood_classes``
    become label -1 in the test_ood split. Labels in neither list are
    skipped (counted in the manifests' metadata).
    """

    checkpoint: str
    layer: str
    dataset: str
    out_dir: str
    id_classes: list[int]
    ood_classes: list[int]
    train_fraction: float = 0.8
    batch_size: int = 64
    device: str = "cpu"
    class_names: list[str] = field(default_factory=list)

    def validate(self) -> None:
        if not self.id_classes:
            raise ExportError("id_classes must name at least one class")
        if not self.ood_classes:
            raise ExportError("ood_classes must name at least one class")
        if len(set(self.id_classes)) != len(self.id_classes):
            raise ExportError("id_classes contains duplicates")
        overlap = set(self.id_classes) & set(self.ood_classes)
        if overlap:
            raise ExportError(f"id_classes and ood_classes overlap: {sorted(overlap)}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ExportError("train_fraction must be in (0, 1)")
        if self.batch_size < 1:
            raise ExportError("batch_size must be >= 1")
        if self.class_names and len(self.class_names) != len(self.id_classes):
            raise ExportError("class_names must match id_classes in length")


def load_spec(path: Path | str) -> ExportSpec:
    path = Path(path)
    if not path.is_file():
        raise ExportError(f"spec file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ExportError(f"spec file {path} is not valid JSON: {exc}") from None
    known = set(ExportSpec.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ExportError(f"unknown spec fields: {sorted(unknown)}")
    missing = {"checkpoint", "layer", "dataset", "out_dir", "id_classes", "ood_classes"} - set(data)
    if missing:
        raise ExportError(f"spec missing required fields: {sorted(missing)}")
    spec = ExportSpec(**data)
    spec.validate()
    return spec

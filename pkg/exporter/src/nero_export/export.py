"""Inference-only bundle export from a trained torch classifier.

The checkpoint must be a pickled ``nn.Module`` (``torch.save(model, ...)``)
whose class is importable at load time; the penultimate representation is
captured with a forward hook on the named submodule, and the final affine
head is identified as the last ``nn.Linear`` that fires during a probe
forward pass. Everything runs in eval mode with gradients disabled.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import ExportError, LayerNotFound, NonAffineHead, ShapeMismatch
from .spec import ExportSpec
from .writer import write_bundle_dir


def _load_checkpoint(path: str, device: str) -> nn.Module:
    file = Path(path)
    if not file.is_file():
        raise ExportError(f"checkpoint not found: {file}")
    try:
        model = torch.load(file, map_location=device, weights_only=False)
    except Exception as exc:
        raise ExportError(f"cannot load checkpoint {file}: {exc}") from exc
    if not isinstance(model, nn.Module):
        raise ExportError(
            f"checkpoint {file} holds {type(model).__name__}, expected a pickled nn.Module "
            "(state_dicts alone carry no graph to hook)"
        )
    return model.eval()


def _load_dataset(path: str, device: str) -> tuple[torch.Tensor, torch.Tensor]:
    file = Path(path)
    if not file.is_file():
        raise ExportError(f"dataset not found: {file}")
    data = torch.load(file, map_location=device, weights_only=True)
    if not isinstance(data, dict) or "inputs" not in data or "labels" not in data:
        raise ExportError(
            f"dataset {file} must be a dict with 'inputs' and 'labels' tensors"
        )
    inputs, labels = data["inputs"], data["labels"]
    if inputs.shape[0] != labels.shape[0]:
        raise ShapeMismatch(
            f"dataset has {inputs.shape[0]} inputs but {labels.shape[0]} labels"
        )
    return inputs, labels.long()


def _resolve_layer(model: nn.Module, name: str) -> nn.Module:
    try:
        return model.get_submodule(name)
    except AttributeError:
        raise LayerNotFound(f"no submodule named {name!r} in the checkpoint") from None


def _flatten(features: torch.Tensor) -> torch.Tensor:
    return features.reshape(features.shape[0], -1)


def _probe_head(
    model: nn.Module, layer: nn.Module, batch: torch.Tensor
) -> tuple[nn.Linear, int]:
    """Identify the final affine layer by execution order and check shapes."""
    fired: list[tuple[nn.Linear, torch.Tensor]] = []
    captured: list[torch.Tensor] = []
    handles = [
        m.register_forward_hook(lambda mod, args, out: fired.append((mod, out)))
        for m in model.modules()
        if isinstance(m, nn.Linear)
    ]
    handles.append(layer.register_forward_hook(lambda mod, args, out: captured.append(out)))
    try:
        with torch.no_grad():
            output = model(batch)
    finally:
        for h in handles:
            h.remove()
    if not captured:
        raise LayerNotFound("the named layer never fired during the forward pass")
    if not fired:
        raise NonAffineHead("no nn.Linear module fired; the model head is not affine")
    head, head_out = fired[-1]
    if not isinstance(output, torch.Tensor) or output.dim() != 2:
        raise NonAffineHead("model output is not a 2-D logits tensor")
    if output.shape != head_out.shape or not torch.equal(output, head_out):
        raise NonAffineHead(
            "model output differs from the last affine layer's output; "
            "a non-affine transform follows the head"
        )
    width = _flatten(captured[-1]).shape[1]
    if width != head.in_features:
        raise ShapeMismatch(
            f"named layer yields width {width} but the affine head consumes "
            f"{head.in_features} features"
        )
    return head, width


def export(spec: ExportSpec) -> tuple[Path, Path, Path]:
    """Run the export; returns the train, test_id, test_ood directories."""
    spec.validate()
    device = spec.device
    model = _load_checkpoint(spec.checkpoint, device)
    inputs, labels = _load_dataset(spec.dataset, device)
    layer = _resolve_layer(model, spec.layer)
    if inputs.shape[0] == 0:
        raise ExportError("dataset is empty")

    head, width = _probe_head(model, layer, inputs[: min(2, inputs.shape[0])].to(device))
    n_classes = head.out_features
    if n_classes != len(spec.id_classes):
        raise ShapeMismatch(
            f"head has {n_classes} outputs but the spec names {len(spec.id_classes)} ID classes"
        )

    features_parts: list[torch.Tensor] = []
    logits_parts: list[torch.Tensor] = []
    grabbed: list[torch.Tensor] = []
    handle = layer.register_forward_hook(lambda mod, args, out: grabbed.append(out))
    try:
        with torch.no_grad():
            for start in range(0, inputs.shape[0], spec.batch_size):
                batch = inputs[start : start + spec.batch_size].to(device)
                logits_parts.append(model(batch).cpu())
                features_parts.append(_flatten(grabbed.pop()).cpu())
    finally:
        handle.remove()

    # float32 widens to float64 exactly; no precision is invented.
    features = torch.cat(features_parts).double().numpy()
    logits = torch.cat(logits_parts).double().numpy()
    if features.shape[1] != width:
        raise ShapeMismatch("representation width changed between batches")
    weights = head.weight.detach().cpu().double().numpy().T  # (d, C)
    bias = (
        head.bias.detach().cpu().double().numpy()
        if head.bias is not None
        else np.zeros(n_classes)
    )

    original = labels.cpu().numpy()
    id_lookup = {orig: new for new, orig in enumerate(spec.id_classes)}
    ood_set = set(spec.ood_classes)
    class_names = spec.class_names or [f"class_{orig}" for orig in spec.id_classes]

    train_idx: list[int] = []
    test_idx: list[int] = []
    ood_idx: list[int] = []
    per_class: dict[int, int] = {orig: 0 for orig in spec.id_classes}
    counts = {orig: int((original == orig).sum()) for orig in spec.id_classes}
    skipped = 0
    for i, orig in enumerate(original):
        orig = int(orig)
        if orig in id_lookup:
            # dataset order decides the split: the first train_fraction of
            # each class trains, the rest tests
            cutoff = int(spec.train_fraction * counts[orig])
            (train_idx if per_class[orig] < cutoff else test_idx).append(i)
            per_class[orig] += 1
        elif orig in ood_set:
            ood_idx.append(i)
        else:
            skipped += 1

    for orig in spec.id_classes:
        cutoff = int(spec.train_fraction * counts[orig])
        if cutoff < 1 or counts[orig] - cutoff < 1:
            raise ExportError(
                f"ID class {orig} has {counts[orig]} samples; train_fraction "
                f"{spec.train_fraction} leaves an empty train or test split"
            )
    if not ood_idx:
        raise ExportError("no samples belong to the OOD classes")

    precision = "float64" if inputs.dtype == torch.float64 else "float32"
    metadata = {
        "exporter": "nero-export",
        "layer": spec.layer,
        "precision": precision,
        "checkpoint": Path(spec.checkpoint).name,
        "id_classes": list(spec.id_classes),
        "ood_classes": list(spec.ood_classes),
        "skipped_samples": skipped,
    }

    out = Path(spec.out_dir)
    splits = (
        ("train", np.array(train_idx, dtype=int), True),
        ("test_id", np.array(test_idx, dtype=int), True),
        ("test_ood", np.array(ood_idx, dtype=int), False),
    )
    paths = []
    for split, idx, is_id in splits:
        if is_id:
            new_labels = np.array([id_lookup[int(v)] for v in original[idx]], dtype=np.int64)
        else:
            new_labels = np.full(len(idx), -1, dtype=np.int64)
        write_bundle_dir(
            out / split,
            features=features[idx],
            logits=logits[idx],
            labels=new_labels,
            weights=weights,
            bias=bias,
            class_names=class_names,
            split=split,
            metadata=metadata,
        )
        paths.append(out / split)
    return tuple(paths)

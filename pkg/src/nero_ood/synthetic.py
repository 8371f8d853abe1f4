"""Seeded synthetic classification problems and a small in-repo trainer.

ID classes are isotropic Gaussian blobs centered on a shell of fixed
radius around the origin. In the separable layout, OOD blobs sit farther
out along directions orthogonal to the ID class subspace, so a network
trained on ID data barely responds to them; the harder "between" layout
places OOD blobs on the ID shell between class centers. A two-layer ReLU
network trained here provides a genuine penultimate layer, so exported
bundles exercise the full detector pipeline with no external ML stack.

Everything is deterministic: one generator seeded from the spec drives all
draws in a fixed order, and training is full-batch.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import csvio
from .bundle import ArtifactBundle
from .errors import DivergedLoss, MissingFile, ParseError, UsageError

# Radius of the shell on which ID class centers are placed.
CLASS_SEPARATION = 6.0

# Trainer initialization. The first layer starts near zero so hidden
# structure grows only along directions the training data provides; the
# positive hidden bias keeps units mildly active for inputs outside those
# directions. The output bias starts with a nonzero sum: cross-entropy
# gradients preserve it, and a zero sum would leave no bias-relevance mass
# to calibrate against.
HIDDEN_WEIGHT_INIT_SCALE = 0.02
HIDDEN_BIAS_INIT = 0.8
OUTPUT_BIAS_INIT_SCALE = 0.1

LAYOUTS = ("separable", "between")

DATASET_FORMAT = "nero-dataset-v1"

DATASET_FILES = {
    "train_inputs": "train_inputs.csv",
    "train_labels": "train_labels.csv",
    "test_inputs": "test_inputs.csv",
    "test_labels": "test_labels.csv",
    "ood_inputs": "ood_inputs.csv",
}


@dataclass(frozen=True)
class ScenarioSpec:
    """Deterministic recipe for one synthetic problem."""

    seed: int = 7
    input_dim: int = 20
    hidden_dim: int = 32
    n_classes: int = 3
    samples_per_class: int = 300
    ood_blob_count: int = 3
    ood_samples_per_blob: int = 100
    ood_displacement: float = 1.0
    blob_std: float = 0.25
    train_fraction: float = 2.0 / 3.0
    layout: str = "separable"

    def validate(self) -> None:
        if self.seed < 0:
            raise UsageError("seed must be a non-negative integer")
        for name in (
            "input_dim",
            "hidden_dim",
            "n_classes",
            "samples_per_class",
            "ood_blob_count",
            "ood_samples_per_blob",
        ):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be >= 1")
        if self.n_classes < 2:
            raise UsageError("n_classes must be >= 2")
        if self.ood_displacement <= 0:
            raise UsageError("ood_displacement must be > 0")
        if self.blob_std <= 0:
            raise UsageError("blob_std must be > 0")
        if not 0.0 < self.train_fraction < 1.0:
            raise UsageError("train_fraction must be in (0, 1)")
        n_train = int(round(self.train_fraction * self.samples_per_class))
        if n_train < 1 or n_train >= self.samples_per_class:
            raise UsageError(
                "train_fraction leaves an empty train or test split per class"
            )
        if self.layout not in LAYOUTS:
            raise UsageError(f"layout must be one of {LAYOUTS}, got {self.layout!r}")


def spec_from_dict(data: dict) -> ScenarioSpec:
    known = {f for f in ScenarioSpec.__dataclass_fields__}
    unknown = set(data) - known
    if unknown:
        raise UsageError(f"unknown scenario fields: {sorted(unknown)}")
    spec = ScenarioSpec(**data)
    spec.validate()
    return spec


@dataclass
class SyntheticDataset:
    spec: ScenarioSpec
    train_inputs: np.ndarray  # (n_train, p)
    train_labels: np.ndarray  # (n_train,)
    test_inputs: np.ndarray  # (n_test, p)
    test_labels: np.ndarray  # (n_test,)
    ood_inputs: np.ndarray  # (n_ood, p)
    id_means: np.ndarray  # (C, p)
    ood_means: np.ndarray  # (B, p)


@dataclass
class ToyModel:
    """Two-layer ReLU network; layer 2 is exactly the bundle's final layer."""

    w1: np.ndarray  # (p, d)
    b1: np.ndarray  # (d,)
    w2: np.ndarray  # (d, C)
    b2: np.ndarray  # (C,)


@dataclass
class TrainResult:
    model: ToyModel
    losses: list[float]  # per-epoch loss, plus the post-training value
    train_accuracy: float


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def generate(spec: ScenarioSpec) -> SyntheticDataset:
    """Draw the blobs and split ID samples into train/test, per class."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    p, n_classes = spec.input_dim, spec.n_classes

    id_dirs = np.stack([_unit(rng.normal(size=p)) for _ in range(n_classes)])
    id_means = CLASS_SEPARATION * id_dirs

    n_train_c = int(round(spec.train_fraction * spec.samples_per_class))
    train_parts, test_parts = [], []
    train_labels, test_labels = [], []
    for c in range(n_classes):
        samples = id_means[c] + spec.blob_std * rng.normal(
            size=(spec.samples_per_class, p)
        )
        train_parts.append(samples[:n_train_c])
        test_parts.append(samples[n_train_c:])
        train_labels.append(np.full(n_train_c, c, dtype=np.int64))
        test_labels.append(
            np.full(spec.samples_per_class - n_train_c, c, dtype=np.int64)
        )

    # Orthonormal basis of the ID class-direction span, for the separable
    # layout's out-of-span placement.
    span_basis, _ = np.linalg.qr(id_dirs.T)
    ood_means = np.zeros((spec.ood_blob_count, p))
    for b in range(spec.ood_blob_count):
        if spec.layout == "separable":
            direction = rng.normal(size=p)
            residual = direction - span_basis @ (span_basis.T @ direction)
            if np.linalg.norm(residual) < 1e-9:  # C >= p leaves no complement
                residual = direction
            ood_means[b] = (CLASS_SEPARATION + spec.ood_displacement) * _unit(residual)
        else:
            # Between two ID centers, on the same shell: hard for
            # magnitude-based scores, keeps comparisons meaningful.
            mid = id_dirs[b % n_classes] + id_dirs[(b + 1) % n_classes]
            if np.linalg.norm(mid) < 1e-9:
                mid = rng.normal(size=p)
            ood_means[b] = CLASS_SEPARATION * _unit(mid)
    ood_parts = [
        ood_means[b] + spec.blob_std * rng.normal(size=(spec.ood_samples_per_blob, p))
        for b in range(spec.ood_blob_count)
    ]

    return SyntheticDataset(
        spec=spec,
        train_inputs=np.concatenate(train_parts),
        train_labels=np.concatenate(train_labels),
        test_inputs=np.concatenate(test_parts),
        test_labels=np.concatenate(test_labels),
        ood_inputs=np.concatenate(ood_parts),
        id_means=id_means,
        ood_means=ood_means,
    )


def _forward(model: ToyModel, inputs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pre = inputs @ model.w1 + model.b1
    hidden = np.maximum(pre, 0.0)
    logits = hidden @ model.w2 + model.b2
    return pre, hidden, logits


def toy_loss(model: ToyModel, inputs: np.ndarray, labels: np.ndarray) -> float:
    """Mean softmax cross-entropy."""
    _, _, logits = _forward(model, inputs)
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(lse - z[np.arange(len(labels)), labels]))


def toy_loss_and_grads(
    model: ToyModel, inputs: np.ndarray, labels: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss plus analytic gradients for all four parameter blocks."""
    n = inputs.shape[0]
    pre, hidden, logits = _forward(model, inputs)
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(lse - z[np.arange(n), labels]))

    probs = np.exp(z - lse[:, None])
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    dw2 = hidden.T @ dlogits
    db2 = dlogits.sum(axis=0)
    dhidden = dlogits @ model.w2.T
    dpre = dhidden * (pre > 0)
    dw1 = inputs.T @ dpre
    db1 = dpre.sum(axis=0)
    return loss, {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2}


def train_toy(
    dataset: SyntheticDataset,
    epochs: int = 300,
    learning_rate: float = 0.05,
    seed: int = 0,
) -> TrainResult:
    """Full-batch gradient descent on softmax cross-entropy."""
    if epochs < 1:
        raise UsageError(f"epochs must be >= 1, got {epochs}")
    if learning_rate <= 0:
        raise UsageError(f"learning_rate must be > 0, got {learning_rate}")
    spec = dataset.spec
    rng = np.random.default_rng(seed)
    model = ToyModel(
        w1=rng.normal(0.0, HIDDEN_WEIGHT_INIT_SCALE, size=(spec.input_dim, spec.hidden_dim)),
        b1=np.full(spec.hidden_dim, HIDDEN_BIAS_INIT),
        w2=rng.normal(0.0, np.sqrt(2.0 / spec.hidden_dim), size=(spec.hidden_dim, spec.n_classes)),
        b2=rng.normal(0.0, OUTPUT_BIAS_INIT_SCALE, size=spec.n_classes),
    )

    inputs, labels = dataset.train_inputs, dataset.train_labels
    losses: list[float] = []
    for _ in range(epochs):
        # Divergence is detected explicitly below; numpy's overflow warnings
        # on the way there are just noise.
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grads = toy_loss_and_grads(model, inputs, labels)
        if not np.isfinite(loss):
            raise DivergedLoss(f"training loss became non-finite after {len(losses)} epochs")
        losses.append(loss)
        model.w1 -= learning_rate * grads["w1"]
        model.b1 -= learning_rate * grads["b1"]
        model.w2 -= learning_rate * grads["w2"]
        model.b2 -= learning_rate * grads["b2"]
        for block in (model.w1, model.b1, model.w2, model.b2):
            if not np.all(np.isfinite(block)):
                raise DivergedLoss(
                    f"parameters became non-finite after {len(losses)} epochs"
                )

    final_loss = toy_loss(model, inputs, labels)
    if not np.isfinite(final_loss):
        raise DivergedLoss(f"training loss became non-finite after {epochs} epochs")
    losses.append(final_loss)

    _, _, logits = _forward(model, inputs)
    accuracy = float(np.mean(logits.argmax(axis=1) == labels))
    return TrainResult(model=model, losses=losses, train_accuracy=accuracy)


def export_bundles(
    model: ToyModel, dataset: SyntheticDataset
) -> tuple[ArtifactBundle, ArtifactBundle, ArtifactBundle]:
    """Hidden activations + recomputed logits as train/test_id/test_ood bundles."""
    spec = dataset.spec
    class_names = [f"class_{c}" for c in range(spec.n_classes)]
    metadata = {"source": "synthetic-lab", "scenario_seed": spec.seed}

    def make(inputs: np.ndarray, labels: np.ndarray, split: str) -> ArtifactBundle:
        _, hidden, logits = _forward(model, inputs)
        return ArtifactBundle(
            features=hidden,
            logits=logits,
            labels=labels,
            weights=model.w2,
            bias=model.b2,
            class_names=class_names,
            split_tag=split,
            metadata=dict(metadata),
        )

    train = make(dataset.train_inputs, dataset.train_labels, "train")
    test_id = make(dataset.test_inputs, dataset.test_labels, "test_id")
    ood_labels = np.full(dataset.ood_inputs.shape[0], -1, dtype=np.int64)
    test_ood = make(dataset.ood_inputs, ood_labels, "test_ood")
    return train, test_id, test_ood


def write_dataset(dataset: SyntheticDataset, path: Path | str) -> None:
    """Persist a dataset directory (CSV matrices plus a JSON manifest)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": DATASET_FORMAT,
        "spec": asdict(dataset.spec),
        "files": dict(DATASET_FILES),
        "id_means": [[float(v) for v in row] for row in dataset.id_means],
        "ood_means": [[float(v) for v in row] for row in dataset.ood_means],
    }
    (path / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    csvio.write_float_matrix(path / DATASET_FILES["train_inputs"], dataset.train_inputs)
    csvio.write_int_vector(path / DATASET_FILES["train_labels"], dataset.train_labels)
    csvio.write_float_matrix(path / DATASET_FILES["test_inputs"], dataset.test_inputs)
    csvio.write_int_vector(path / DATASET_FILES["test_labels"], dataset.test_labels)
    csvio.write_float_matrix(path / DATASET_FILES["ood_inputs"], dataset.ood_inputs)


def load_dataset(path: Path | str) -> SyntheticDataset:
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
    if manifest.get("format") != DATASET_FORMAT:
        raise ParseError(f"not a {DATASET_FORMAT} directory", path=manifest_path)
    files = manifest["files"]
    return SyntheticDataset(
        spec=spec_from_dict(manifest["spec"]),
        train_inputs=csvio.read_float_matrix(path / files["train_inputs"]),
        train_labels=csvio.read_int_vector(path / files["train_labels"]),
        test_inputs=csvio.read_float_matrix(path / files["test_inputs"]),
        test_labels=csvio.read_int_vector(path / files["test_labels"]),
        ood_inputs=csvio.read_float_matrix(path / files["ood_inputs"]),
        id_means=np.array(manifest["id_means"], dtype=np.float64),
        ood_means=np.array(manifest["ood_means"], dtype=np.float64),
    )

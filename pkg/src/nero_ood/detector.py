"""The NERO detector: relevance centroids, bias calibration, scaled scoring.

Fitting computes each class's mean projected relevance vector (a centroid)
over the training split, then calibrates a weight ``lambda`` so that the
bias-relevance term matches the typical centroid distance in scale:

    lambda = mean(nearest-centroid distance) / mean(|bias relevance|)

Scoring a sample combines three ingredients::

    score = (min_c ||proj(r) - mu_c|| + lambda * |r_beta|) * sum_{j in B_k} |fhat_j|

where B_k indexes the k neurons with the smallest |relevance| and fhat is
the sample's normalized feature vector. Higher score means more OOD.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bundle import ArtifactBundle
from .errors import (
    DimensionMismatch,
    EmptyClass,
    IoError,
    MissingFile,
    ParseError,
    UsageError,
    WeightHashMismatch,
)
from .relevance import Y_MODES, relevance, relevance_batch
from .subspace import (
    Projection,
    fit_pca,
    project,
    project_rows,
    projection_from_dict,
    projection_to_dict,
)

LAMBDA_MODES = ("nearest", "own")
FEATURE_NORMS = ("l2", "l1")

LAMBDA_DENOMINATOR_GUARD = 1e-12

MODEL_FORMAT = "nero-model-v1"


@dataclass(frozen=True)
class DetectorConfig:
    """Fit-time knobs; the fitted model snapshots all of them.

    z / variance_fraction select the projection width (default: fraction
    0.95). k defaults to ceil(d / 2). lambda_mode chooses whether the
    calibration numerator uses the nearest centroid (default) or each
    training sample's own-class centroid.
    """

    z: int | None = None
    variance_fraction: float | None = None
    k: int | None = None
    eps: float = 1e-12
    y_mode: str = "logit"
    lambda_mode: str = "nearest"
    feature_norm: str = "l2"


@dataclass
class NeroModel:
    projection: Projection
    centroids: np.ndarray  # (C, z)
    lam: float
    k: int
    weights: np.ndarray  # (d, C), shared with the fitting bundle
    bias: np.ndarray  # (C,)
    eps: float
    y_mode: str
    lambda_mode: str
    feature_norm: str
    fit_info: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return int(self.weights.shape[0])

    @property
    def n_classes(self) -> int:
        return int(self.weights.shape[1])


@dataclass(frozen=True)
class ScoreBreakdown:
    """Score terms for one sample. Always: score = (min_distance + bias_term) * scale_factor."""

    min_distance: float
    argmin_class: int
    bias_term: float
    scale_factor: float
    score: float


def normalize_features(features: np.ndarray, mode: str = "l2") -> np.ndarray:
    """Per-sample feature normalization; the zero vector maps to itself."""
    if mode not in FEATURE_NORMS:
        raise UsageError(f"feature_norm must be one of {FEATURE_NORMS}, got {mode!r}")
    f = np.asarray(features, dtype=np.float64)
    norm = float(np.linalg.norm(f)) if mode == "l2" else float(np.abs(f).sum())
    if norm == 0.0:
        return np.zeros_like(f)
    return f / norm


def bottom_k_indices(magnitudes: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k smallest entries; ties resolved lowest index first."""
    magnitudes = np.asarray(magnitudes)
    if not 1 <= k <= magnitudes.shape[0]:
        raise UsageError(f"k must be in [1, {magnitudes.shape[0]}], got {k}")
    return np.argsort(magnitudes, kind="stable")[:k]


def class_centroids(projected: np.ndarray, labels: np.ndarray, n_classes: int) -> np.ndarray:
    """Per-class mean of projected relevance rows."""
    centroids = np.zeros((n_classes, projected.shape[1]))
    for c in range(n_classes):
        rows = projected[labels == c]
        if rows.shape[0] == 0:
            raise EmptyClass(f"class {c} has no samples")
        centroids[c] = rows.mean(axis=0)
    return centroids


def calibration_lambda(distances: np.ndarray, bias_magnitudes: np.ndarray) -> float:
    """Ratio of mean centroid distance to mean |bias relevance|.

    A denominator below the guard would blow lambda up to infinity; the
    bias term is disabled (lambda = 0) instead.
    """
    denominator = float(np.mean(bias_magnitudes))
    if denominator < LAMBDA_DENOMINATOR_GUARD:
        return 0.0
    return float(np.mean(distances) / denominator)


def centroid_distances(centroids: np.ndarray, projected: np.ndarray) -> np.ndarray:
    """Euclidean distance from one projected vector to every centroid."""
    return np.linalg.norm(centroids - projected, axis=1)


def combine_score(min_distance: float, bias_term: float, scale_factor: float) -> float:
    # The documented floating-point expression; tests pin this exact order.
    return (min_distance + bias_term) * scale_factor


def fit(train: ArtifactBundle, config: DetectorConfig | None = None, threads: int = 1) -> NeroModel:
    """Fit a detector on a training bundle.

    Pipeline: relevance matrix over the train split, PCA on it, per-class
    centroids of the projected rows, then the lambda calibration ratio.
    """
    config = config or DetectorConfig()
    if train.split_tag != "train":
        raise UsageError(f"fit requires a train split, got {train.split_tag!r}")
    if config.y_mode not in Y_MODES:
        raise UsageError(f"y_mode must be one of {Y_MODES}, got {config.y_mode!r}")
    if config.lambda_mode not in LAMBDA_MODES:
        raise UsageError(
            f"lambda_mode must be one of {LAMBDA_MODES}, got {config.lambda_mode!r}"
        )
    if config.feature_norm not in FEATURE_NORMS:
        raise UsageError(
            f"feature_norm must be one of {FEATURE_NORMS}, got {config.feature_norm!r}"
        )
    k = config.k if config.k is not None else -(-train.d // 2)  # ceil(d / 2)
    if not 1 <= k <= train.d:
        raise UsageError(f"k must be in [1, {train.d}], got {k}")

    batch = relevance_batch(train, eps=config.eps, y_mode=config.y_mode, threads=threads)
    projection = fit_pca(
        batch.neuron_relevance, z=config.z, variance_fraction=config.variance_fraction
    )
    projected = project_rows(projection, batch.neuron_relevance)
    centroids = class_centroids(projected, train.labels, train.n_classes)

    distances = np.zeros(train.n)
    for i in range(train.n):
        dists = centroid_distances(centroids, projected[i])
        if config.lambda_mode == "nearest":
            distances[i] = dists.min()
        else:
            distances[i] = dists[int(train.labels[i])]
    lam = calibration_lambda(distances, np.abs(batch.bias_relevance))

    return NeroModel(
        projection=projection,
        centroids=centroids,
        lam=lam,
        k=int(k),
        weights=train.weights,
        bias=train.bias,
        eps=float(config.eps),
        y_mode=config.y_mode,
        lambda_mode=config.lambda_mode,
        feature_norm=config.feature_norm,
        fit_info={
            "n_train": train.n,
            "z": projection.output_dim,
            "lambda": lam,
            "skipped_denominators": batch.skipped_pairs,
        },
    )


def score(model: NeroModel, features: np.ndarray, logits: np.ndarray) -> ScoreBreakdown:
    """Score one sample; higher means more OOD.

    Relevance uses the supplied (stored) logits rather than recomputing
    them from the features, so float32-exported logits stay authoritative.
    """
    rel = relevance(
        features, logits, model.weights, model.bias, eps=model.eps, y_mode=model.y_mode
    )
    projected = project(model.projection, rel.neuron_relevance)
    dists = centroid_distances(model.centroids, projected)
    argmin_class = int(np.argmin(dists))  # first minimum: lowest class index wins ties
    min_distance = float(dists[argmin_class])
    bias_term = model.lam * abs(rel.bias_relevance)

    fhat = normalize_features(features, model.feature_norm)
    picked = bottom_k_indices(np.abs(rel.neuron_relevance), model.k)
    scale_factor = float(np.abs(fhat[picked]).sum())

    return ScoreBreakdown(
        min_distance=min_distance,
        argmin_class=argmin_class,
        bias_term=bias_term,
        scale_factor=scale_factor,
        score=combine_score(min_distance, bias_term, scale_factor),
    )


def score_batch(
    model: NeroModel, b: ArtifactBundle, threads: int = 1
) -> tuple[np.ndarray, list[ScoreBreakdown]]:
    """Score every sample of a bundle; row i is bit-identical to score() on sample i."""
    if threads < 1:
        raise UsageError(f"threads must be >= 1, got {threads}")
    if b.d != model.d or b.n_classes != model.n_classes:
        raise DimensionMismatch(
            f"bundle (d={b.d}, C={b.n_classes}) does not match model "
            f"(d={model.d}, C={model.n_classes})"
        )
    n = b.n
    if n == 0:
        return np.zeros(0), []

    def one(i: int) -> ScoreBreakdown:
        try:
            return score(model, b.features[i], b.logits[i])
        except Exception as exc:
            exc.args = (f"sample {i}: {exc}",)
            raise

    if threads == 1:
        breakdowns = [one(i) for i in range(n)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            breakdowns = list(pool.map(one, range(n)))
    return np.array([bd.score for bd in breakdowns]), breakdowns


def weight_hash(weights: np.ndarray, bias: np.ndarray) -> str:
    """Content hash of the final-layer parameters, for mismatch detection."""
    w = np.ascontiguousarray(weights, dtype=np.float64)
    b = np.ascontiguousarray(bias, dtype=np.float64)
    h = hashlib.sha256()
    h.update(repr(w.shape).encode())
    h.update(w.tobytes())
    h.update(repr(b.shape).encode())
    h.update(b.tobytes())
    return "sha256:" + h.hexdigest()


def save_model(model: NeroModel, path: Path | str) -> None:
    """Write a model file (JSON). Weights/bias are referenced by hash only."""
    payload = {
        "format": MODEL_FORMAT,
        "projection": projection_to_dict(model.projection),
        "centroids": [[float(v) for v in row] for row in model.centroids],
        "lambda": float(model.lam),
        "k": model.k,
        "eps": model.eps,
        "y_mode": model.y_mode,
        "lambda_mode": model.lambda_mode,
        "feature_norm": model.feature_norm,
        "d": model.d,
        "n_classes": model.n_classes,
        "weight_hash": weight_hash(model.weights, model.bias),
        "fit_info": model.fit_info,
    }
    try:
        Path(path).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    except OSError as exc:
        raise IoError(f"cannot write model to {path}: {exc}") from exc


def load_model(path: Path | str, weights: np.ndarray, bias: np.ndarray) -> NeroModel:
    """Read a model file and bind it to the final-layer parameters.

    The parameters (typically from the bundle about to be scored) must hash
    to the value recorded at save time.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"missing file: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"invalid JSON: {exc.msg}", path=path, line=exc.lineno, column=exc.colno
        ) from None
    if data.get("format") != MODEL_FORMAT:
        raise ParseError(f"not a {MODEL_FORMAT} file", path=path)

    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    found = weight_hash(weights, bias)
    if found != data["weight_hash"]:
        raise WeightHashMismatch(
            "final-layer parameters do not match the ones this model was fitted on "
            f"(expected {data['weight_hash']}, got {found})"
        )
    return NeroModel(
        projection=projection_from_dict(data["projection"]),
        centroids=np.array(data["centroids"], dtype=np.float64),
        lam=float(data["lambda"]),
        k=int(data["k"]),
        weights=weights,
        bias=bias,
        eps=float(data["eps"]),
        y_mode=str(data["y_mode"]),
        lambda_mode=str(data["lambda_mode"]),
        feature_norm=str(data["feature_norm"]),
        fit_info=dict(data.get("fit_info", {})),
    )

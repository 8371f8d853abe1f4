"""Classical post-hoc OOD scores for comparison.

Every score here follows the same convention as the detector: higher means
more OOD. Confidence-style quantities (max softmax probability, max logit,
negative energy) are therefore negated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundle import ArtifactBundle
from .errors import DimensionMismatch, EmptyClass, SingularCovariance, UsageError
from .relevance import stable_softmax


@dataclass(frozen=True)
class MahalanobisModel:
    """Class means plus the inverse of the tied, ridge-regularized covariance."""

    class_means: np.ndarray  # (C, d)
    precision: np.ndarray  # (d, d), symmetric positive definite


def msp(logits: np.ndarray) -> float:
    """Negative maximum softmax probability."""
    p = stable_softmax(np.asarray(logits, dtype=np.float64))
    return -float(p.max())


def max_logit(logits: np.ndarray) -> float:
    """Negative maximum logit."""
    return -float(np.max(np.asarray(logits, dtype=np.float64)))


def energy(logits: np.ndarray, temperature: float = 1.0) -> float:
    """Negative temperature-scaled log-sum-exp of the logits."""
    if temperature <= 0:
        raise UsageError(f"temperature must be > 0, got {temperature}")
    z = np.asarray(logits, dtype=np.float64) / temperature
    m = float(np.max(z))
    return -temperature * (m + float(np.log(np.exp(z - m).sum())))


def entropy(logits: np.ndarray) -> float:
    """Shannon entropy of the softmax distribution (natural log)."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - np.max(z)
    logp = z - np.log(np.exp(z).sum())
    p = np.exp(logp)
    return -float((p * logp).sum())


def fit_mahalanobis(train: ArtifactBundle, ridge: float | None = None) -> MahalanobisModel:
    """Class means and tied-covariance precision over training features.

    Covariance is the mean outer product of class-centered features plus
    ridge * I; ridge defaults to 1e-6 * trace / d. A covariance that is not
    positive definite even after the ridge raises SingularCovariance.
    """
    if ridge is not None and ridge < 0:
        raise UsageError(f"ridge must be >= 0, got {ridge}")
    features = train.features
    labels = train.labels
    n, d = features.shape
    n_classes = train.n_classes

    means = np.zeros((n_classes, d))
    centered = np.zeros_like(features)
    for c in range(n_classes):
        mask = labels == c
        if not np.any(mask):
            raise EmptyClass(f"class {c} has no samples")
        means[c] = features[mask].mean(axis=0)
        centered[mask] = features[mask] - means[c]

    cov = centered.T @ centered / n
    if ridge is None:
        ridge = 1e-6 * float(np.trace(cov)) / d
    cov = cov + ridge * np.eye(d)

    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise SingularCovariance(
            f"tied covariance is not positive definite (ridge={ridge})"
        ) from None
    precision = np.linalg.inv(cov)
    precision = (precision + precision.T) / 2.0  # inv() can break symmetry at float eps
    return MahalanobisModel(class_means=means, precision=precision)


def mahalanobis_score(m: MahalanobisModel, features: np.ndarray) -> float:
    """Smallest squared Mahalanobis distance to any class mean."""
    f = np.asarray(features, dtype=np.float64)
    if f.shape != (m.class_means.shape[1],):
        raise DimensionMismatch(
            f"expected a vector of length {m.class_means.shape[1]}, got shape {f.shape}"
        )
    best = np.inf
    for mean in m.class_means:
        diff = f - mean
        dist = float(diff @ m.precision @ diff)
        if dist < best:
            best = dist
    return best


def react_clip_threshold(train_features: np.ndarray, percentile: float = 90.0) -> float:
    """Clip level for react_energy: a percentile of all train feature entries."""
    if not 0 < percentile <= 100:
        raise UsageError(f"percentile must be in (0, 100], got {percentile}")
    return float(np.percentile(np.asarray(train_features, dtype=np.float64).ravel(), percentile))


def react_energy(
    features: np.ndarray,
    weights: np.ndarray,
    bias: np.ndarray,
    clip: float,
    temperature: float = 1.0,
) -> float:
    """Energy score after clipping activations and recomputing the logits."""
    if not np.isfinite(clip) or clip <= 0:
        raise UsageError(f"clip must be a finite positive value, got {clip}")
    f = np.minimum(np.asarray(features, dtype=np.float64), clip)
    logits = f @ np.asarray(weights, dtype=np.float64) + np.asarray(bias, dtype=np.float64)
    return energy(logits, temperature)

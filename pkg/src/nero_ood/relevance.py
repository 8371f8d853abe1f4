"""Neuron-level relevance of the final linear layer.

For a sample with penultimate features a and logits y-hat, each class c
receives total input denom_c = bias_c + sum_k a_k * w_kc. The relevance of
neuron j is the share of each class's output it is responsible for::

    r_j = sum_c (a_j * w_jc / denom_c) * yhat_c

The bias acts as one extra neuron with activation 1, collecting
r_beta = sum_c (bias_c / denom_c) * yhat_c. Together they conserve the
total output: r_beta + sum_j r_j = sum_c yhat_c, whenever no class was
skipped for a near-zero denominator.

yhat_c is the raw logit by default; ``y_mode="softmax"`` uses softmax
probabilities instead (denominators are always recomputed from features
and weights, never from yhat).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bundle import ArtifactBundle
from .errors import AllClassesDegenerate, DimensionMismatch, UsageError

Y_MODES = ("logit", "softmax")


@dataclass(frozen=True)
class RelevanceResult:
    """Per-neuron relevances plus the bias neuron's share for one sample."""

    neuron_relevance: np.ndarray  # (d,)
    bias_relevance: float
    skipped_classes: int = 0


@dataclass(frozen=True)
class BatchRelevance:
    """Row-stacked relevances for a whole bundle."""

    neuron_relevance: np.ndarray  # (n, d)
    bias_relevance: np.ndarray  # (n,)
    skipped_pairs: int  # number of (sample, class) pairs skipped for |denom| <= eps


def stable_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits)
    e = np.exp(z)
    return e / e.sum()


def relevance(
    features: np.ndarray,
    logits: np.ndarray,
    weights: np.ndarray,
    bias: np.ndarray,
    eps: float = 1e-12,
    y_mode: str = "logit",
) -> RelevanceResult:
    """Relevance of each penultimate neuron (and the bias) for one sample.

    Classes whose total input satisfies |denom_c| <= eps are skipped: the
    share of the output is undefined there. If every class is skipped the
    result would be identically zero, which is reported as
    AllClassesDegenerate rather than returned silently.
    """
    if eps < 0:
        raise UsageError(f"eps must be >= 0, got {eps}")
    if y_mode not in Y_MODES:
        raise UsageError(f"y_mode must be one of {Y_MODES}, got {y_mode!r}")
    f = np.asarray(features, dtype=np.float64)
    y = np.asarray(logits, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    b = np.asarray(bias, dtype=np.float64)
    if f.ndim != 1 or y.ndim != 1 or w.ndim != 2 or b.ndim != 1:
        raise DimensionMismatch(
            f"expected shapes (d,), (C,), (d, C), (C,); got {f.shape}, {y.shape}, "
            f"{w.shape}, {b.shape}"
        )
    d, n_classes = w.shape
    if f.shape[0] != d or y.shape[0] != n_classes or b.shape[0] != n_classes:
        raise DimensionMismatch(
            f"inconsistent dimensions: features {f.shape}, logits {y.shape}, "
            f"weights {w.shape}, bias {b.shape}"
        )

    denom = b + f @ w  # (C,) total input per class, bias included
    active = np.abs(denom) > eps
    if not np.any(active):
        raise AllClassesDegenerate(
            f"all {n_classes} class denominators within eps={eps} of zero"
        )
    yhat = y if y_mode == "logit" else stable_softmax(y)
    ratio = np.where(active, yhat / np.where(active, denom, 1.0), 0.0)
    neuron = f * (w @ ratio)
    bias_rel = float(b @ ratio)
    return RelevanceResult(
        neuron_relevance=neuron,
        bias_relevance=bias_rel,
        skipped_classes=int(n_classes - np.count_nonzero(active)),
    )


def relevance_batch(
    b: ArtifactBundle,
    eps: float = 1e-12,
    y_mode: str = "logit",
    threads: int = 1,
) -> BatchRelevance:
    """Relevance of every sample in a bundle.

    Row i is bit-identical to ``relevance`` applied to sample i: the batch
    path evaluates the same per-sample kernel, whether sequentially or on a
    thread pool, so results never depend on ``threads``.
    """
    if threads < 1:
        raise UsageError(f"threads must be >= 1, got {threads}")
    n = b.n
    if n == 0:
        return BatchRelevance(
            neuron_relevance=np.zeros((0, b.d)),
            bias_relevance=np.zeros(0),
            skipped_pairs=0,
        )

    def one(i: int) -> RelevanceResult:
        try:
            return relevance(b.features[i], b.logits[i], b.weights, b.bias, eps, y_mode)
        except AllClassesDegenerate as exc:
            raise AllClassesDegenerate(f"sample {i}: {exc}") from None

    if threads == 1:
        results = [one(i) for i in range(n)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(n)))

    return BatchRelevance(
        neuron_relevance=np.stack([r.neuron_relevance for r in results]),
        bias_relevance=np.array([r.bias_relevance for r in results]),
        skipped_pairs=sum(r.skipped_classes for r in results),
    )

"""Threshold-free and thresholded OOD evaluation.

AUROC is the probability that a random OOD sample scores above a random ID
sample, counting ties as one half (computed from rank statistics, exactly
equal to the pairwise definition). FPR-at-TPR picks the smallest realized
ID score accepting the requested fraction of ID samples, then reports the
fraction of OOD samples also accepted. ID is the positive class: a sample
is accepted as ID when its score is <= the threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import csvio
from .errors import EmptyInput, IoError, ParseError, UsageError

REPORT_FORMAT = "nero-report-v1"


@dataclass
class EvalReport:
    """One method's evaluation summary."""

    method_name: str
    auroc: float
    fpr95: float
    threshold: float
    n_id: int
    n_ood: int
    config: dict = field(default_factory=dict)


def _as_scores(values: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise UsageError(f"{name} must be a 1-D array, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise EmptyInput(f"{name} is empty")
    return arr


def auroc(id_scores: np.ndarray, ood_scores: np.ndarray) -> float:
    """P(ood > id) + 0.5 * P(ood == id) via tie-averaged ranks."""
    id_s = _as_scores(id_scores, "id_scores")
    ood_s = _as_scores(ood_scores, "ood_scores")
    n, m = id_s.shape[0], ood_s.shape[0]
    pooled = np.concatenate([id_s, ood_s])

    # Average rank of a tie group spanning sorted slots [start, end] is
    # (start + end) / 2 + 1; all quantities are exact half-integers, so the
    # result matches the brute-force pairwise count bit for bit.
    _, inverse, counts = np.unique(pooled, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    starts = ends - counts
    average_rank = (starts + ends - 1) / 2 + 1
    ranks = average_rank[inverse]

    u = ranks[n:].sum() - m * (m + 1) / 2
    return float(u / (n * m))


def fpr_at_tpr(
    id_scores: np.ndarray, ood_scores: np.ndarray, tpr: float = 0.95
) -> tuple[float, float]:
    """(fpr, threshold) at the requested ID true-positive rate.

    The threshold is the smallest ID score value t with
    fraction(id <= t) >= tpr; fpr is the fraction of OOD scores <= t.
    """
    if not 0.0 < tpr <= 1.0:
        raise UsageError(f"tpr must be in (0, 1], got {tpr}")
    id_s = np.sort(_as_scores(id_scores, "id_scores"))
    ood_s = _as_scores(ood_scores, "ood_scores")
    n = id_s.shape[0]
    fractions = np.arange(1, n + 1) / n
    k = int(np.argmax(fractions >= tpr)) + 1  # fractions[-1] == 1.0 always qualifies
    threshold = float(id_s[k - 1])
    fpr = float(np.count_nonzero(ood_s <= threshold) / ood_s.shape[0])
    return fpr, threshold


def evaluate(
    method_name: str,
    id_scores: np.ndarray,
    ood_scores: np.ndarray,
    config: dict | None = None,
    tpr: float = 0.95,
) -> EvalReport:
    """Bundle AUROC and FPR-at-TPR into a report."""
    fpr, threshold = fpr_at_tpr(id_scores, ood_scores, tpr=tpr)
    return EvalReport(
        method_name=method_name,
        auroc=auroc(id_scores, ood_scores),
        fpr95=fpr,
        threshold=threshold,
        n_id=int(np.asarray(id_scores).shape[0]),
        n_ood=int(np.asarray(ood_scores).shape[0]),
        config=dict(config or {}),
    )


def report_to_dict(report: EvalReport) -> dict:
    return {
        "format": REPORT_FORMAT,
        "method": report.method_name,
        "auroc": report.auroc,
        "fpr95": report.fpr95,
        "threshold": report.threshold,
        "n_id": report.n_id,
        "n_ood": report.n_ood,
        "config": report.config,
    }


def report_from_dict(data: dict) -> EvalReport:
    return EvalReport(
        method_name=str(data["method"]),
        auroc=float(data["auroc"]),
        fpr95=float(data["fpr95"]),
        threshold=float(data["threshold"]),
        n_id=int(data["n_id"]),
        n_ood=int(data["n_ood"]),
        config=dict(data.get("config", {})),
    )


def write_report(report: EvalReport, path: Path | str) -> None:
    try:
        Path(path).write_text(
            json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    except OSError as exc:
        raise IoError(f"cannot write report to {path}: {exc}") from exc


def read_report(path: Path | str) -> EvalReport:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"invalid JSON: {exc.msg}", path=path, line=exc.lineno, column=exc.colno
        ) from None
    return report_from_dict(data)


def reports_to_csv(reports: list[EvalReport], sort_by_auroc: bool = True) -> str:
    """Flat one-row-per-method table (columns: method, auroc, fpr95)."""
    rows = list(reports)
    if sort_by_auroc:
        rows.sort(key=lambda r: (-r.auroc, r.method_name))
    lines = ["method,auroc,fpr95"]
    for r in rows:
        lines.append(
            f"{r.method_name},{csvio.format_float(r.auroc)},{csvio.format_float(r.fpr95)}"
        )
    return "\n".join(lines) + "\n"

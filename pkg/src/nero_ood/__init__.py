"""Relevance-based OOD detection over exported final-layer model artifacts."""

from . import errors
from .baselines import (
    MahalanobisModel,
    energy,
    entropy,
    fit_mahalanobis,
    mahalanobis_score,
    max_logit,
    msp,
    react_clip_threshold,
    react_energy,
)
from .bundle import (
    ArtifactBundle,
    ConsistencyReport,
    load_bundle,
    validate_bundle,
    validate_consistency,
    write_bundle,
)
from .detector import (
    DetectorConfig,
    NeroModel,
    ScoreBreakdown,
    fit,
    load_model,
    save_model,
    score,
    score_batch,
)
from .metrics import EvalReport, auroc, evaluate, fpr_at_tpr
from .relevance import BatchRelevance, RelevanceResult, relevance, relevance_batch
from .subspace import Projection, fit_pca, project, project_rows
from .synthetic import (
    ScenarioSpec,
    SyntheticDataset,
    ToyModel,
    TrainResult,
    export_bundles,
    generate,
    train_toy,
)

__version__ = "0.1.0"

__all__ = [
    "ArtifactBundle",
    "BatchRelevance",
    "ConsistencyReport",
    "DetectorConfig",
    "EvalReport",
    "MahalanobisModel",
    "NeroModel",
    "Projection",
    "RelevanceResult",
    "ScenarioSpec",
    "ScoreBreakdown",
    "SyntheticDataset",
    "ToyModel",
    "TrainResult",
    "auroc",
    "energy",
    "entropy",
    "errors",
    "evaluate",
    "export_bundles",
    "fit",
    "fit_mahalanobis",
    "fit_pca",
    "fpr_at_tpr",
    "generate",
    "load_bundle",
    "load_model",
    "mahalanobis_score",
    "max_logit",
    "msp",
    "project",
    "project_rows",
    "react_clip_threshold",
    "react_energy",
    "relevance",
    "relevance_batch",
    "save_model",
    "score",
    "score_batch",
    "train_toy",
    "validate_bundle",
    "validate_consistency",
    "write_bundle",
]

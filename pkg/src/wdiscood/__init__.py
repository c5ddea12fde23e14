"""Feature-space OOD detection with whitened linear discriminant analysis."""

from .errors import (
    DataError,
    DegenerateModel,
    DimMismatch,
    NumericalError,
    WDiscOODError,
)
from .metrics import EvalReport, auroc, evaluate, fpr_at_tpr
from .scoring import (
    ScoreVector,
    score_wd,
    score_wdiscood,
    score_wdr,
)
from .stats import DatasetStats, LabeledFeatures, balanced_subsample, fit_stats
from .wlda import WldaConfig, WldaModel, fit, project_wd, project_wdr, solve

__version__ = "0.1.0"

__all__ = [
    "DataError", "DegenerateModel", "DimMismatch", "NumericalError", "WDiscOODError",
    "EvalReport", "auroc", "evaluate", "fpr_at_tpr",
    "ScoreVector", "score_wd", "score_wdiscood", "score_wdr",
    "DatasetStats", "LabeledFeatures", "balanced_subsample", "fit_stats",
    "WldaConfig", "WldaModel", "fit", "project_wd", "project_wdr", "solve",
]

"""Post hoc ensembling of base-model predictions: greedy ensemble selection,
CMA-ES weight search with pre-aggregation normalization, a stacking
baseline, and rank statistics for comparing them across datasets."""

__version__ = "0.1.0"

from .core import FoldData, MetricKind, PredictionSet, TaskKind, validate_prediction_set
from .cmaes import cmaes_fit_ensemble
from .ges import ges_fit
from .normalize import explicit_ges_norm, implicit_ges_norm, softmax_norm
from .stacking import stacker_fit, stacker_predict

__all__ = [
    "FoldData", "MetricKind", "PredictionSet", "TaskKind", "validate_prediction_set",
    "cmaes_fit_ensemble", "ges_fit", "explicit_ges_norm", "implicit_ges_norm",
    "softmax_norm", "stacker_fit", "stacker_predict",
]

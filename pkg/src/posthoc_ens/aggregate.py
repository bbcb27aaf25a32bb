"""Weighted aggregation of base-model predictions and the loss of a weight vector."""
from __future__ import annotations

import enum

import numpy as np

from .core import LengthMismatch, MetricKind, NonFiniteInput, PredictionSet
from .metrics import loss_of


class EvalMode(enum.Enum):
    # unconstrained vector; softmax after aggregation for ROC AUC
    RAW_CMAES = "raw"
    # vector already on the simplex; aggregated rows are probabilities
    NORMALIZED = "normalized"


def weighted_mean(pred_set: PredictionSet, w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (pred_set.n_models,):
        raise LengthMismatch(f"weight vector of length {w.size} for a pool of {pred_set.n_models}")
    agg = np.tensordot(w, pred_set.probs, axes=1)
    total = w.sum()
    # zero-sum vectors are left unnormalized so the optimizer never sees NaN
    if total != 0.0:
        agg /= total
    return agg


def post_softmax(agg) -> np.ndarray:
    agg = np.asarray(agg, dtype=np.float64)
    if not np.all(np.isfinite(agg)):
        raise NonFiniteInput("cannot take softmax of non-finite values")
    e = np.exp(agg - agg.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def predict_labels(agg) -> np.ndarray:
    agg = np.asarray(agg)
    if not np.all(np.isfinite(agg)):
        raise NonFiniteInput("cannot take argmax of non-finite values")
    # np.argmax returns the first maximum, i.e. the lowest class index on ties
    return np.argmax(agg, axis=1)


def predictions_for(metric: MetricKind, agg: np.ndarray, mode: EvalMode) -> np.ndarray:
    if metric.needs_labels:
        return predict_labels(agg)
    if mode is EvalMode.RAW_CMAES:
        return post_softmax(agg)
    return agg


def evaluate_weights(pred_set: PredictionSet, w, metric: MetricKind,
                     mode: EvalMode = EvalMode.NORMALIZED) -> float:
    agg = weighted_mean(pred_set, w)
    return loss_of(metric, pred_set, predictions_for(metric, agg, mode))

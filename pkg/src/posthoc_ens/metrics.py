"""Balanced accuracy and ROC AUC, plus the loss wrapper every optimizer minimizes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LengthMismatch, MetricKind, PosthocError


class EmptyInput(PosthocError):
    pass


class SingleClassError(PosthocError):
    pass


@dataclass(frozen=True)
class Score:
    value: float
    metric: MetricKind
    higher_is_better: bool = True

    def __float__(self):
        return self.value


def midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks of ``x`` in ascending order, ties get the average position."""
    x = np.asarray(x)
    n = x.shape[0]
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    # boundaries of runs of equal values
    new_run = np.empty(n, dtype=bool)
    new_run[:1] = True
    np.not_equal(xs[1:], xs[:-1], out=new_run[1:])
    starts = np.flatnonzero(new_run)
    ends = np.append(starts[1:], n)
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def balanced_accuracy(labels, predicted) -> Score:
    labels = np.asarray(labels)
    predicted = np.asarray(predicted)
    if labels.size == 0:
        raise EmptyInput("no instances to score")
    if labels.shape != predicted.shape:
        raise LengthMismatch(f"{labels.shape} labels vs {predicted.shape} predictions")
    classes, inverse = np.unique(labels, return_inverse=True)
    totals = np.bincount(inverse, minlength=classes.size)
    hits = np.bincount(inverse, weights=(labels == predicted), minlength=classes.size)
    return Score(float(np.mean(hits / totals)), MetricKind.BALANCED_ACCURACY)


def _auc(positive: np.ndarray, scores: np.ndarray) -> float:
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("ROC AUC needs both positive and negative instances")
    ranks = midranks(scores)
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_auc_binary(labels, scores) -> Score:
    """Mann-Whitney form of the AUC; tied (pos, neg) pairs count one half."""
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.size == 0:
        raise EmptyInput("no instances to score")
    if labels.shape != scores.shape:
        raise LengthMismatch(f"{labels.shape} labels vs {scores.shape} scores")
    return Score(_auc(labels == 1, scores), MetricKind.ROC_AUC)


def roc_auc_macro_ovr(labels, probs) -> Score:
    labels = np.asarray(labels)
    probs = np.asarray(probs, dtype=np.float64)
    if labels.size == 0:
        raise EmptyInput("no instances to score")
    if probs.ndim != 2 or probs.shape[0] != labels.shape[0]:
        raise LengthMismatch(f"probability matrix {probs.shape} vs {labels.shape[0]} labels")
    c = probs.shape[1]
    if c == 2:
        return roc_auc_binary(labels, probs[:, 1])
    aucs = [_auc(labels == k, probs[:, k]) for k in range(c)]
    return Score(float(np.mean(aucs)), MetricKind.ROC_AUC)


def score_of(metric: MetricKind, labels, predictions) -> Score:
    """Dispatch on metric: label vector for balanced accuracy, probability
    matrix for ROC AUC."""
    if metric is MetricKind.BALANCED_ACCURACY:
        return balanced_accuracy(labels, predictions)
    return roc_auc_macro_ovr(labels, predictions)


def loss_of(metric: MetricKind, pred_set, predictions) -> float:
    return 1.0 - score_of(metric, pred_set.labels, predictions).value

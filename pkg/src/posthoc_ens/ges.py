"""Greedy ensemble selection with replacement."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import MetricKind, PosthocError, PredictionSet
from .aggregate import predict_labels
from .metrics import loss_of


class EmptyPool(PosthocError):
    pass


class CountSumMismatch(PosthocError):
    pass


@dataclass
class GesState:
    """Bookkeeping of one greedy run.

    ``members`` is the full selection list E; ``best_size`` is the length of
    the prefix of E with the lowest validation loss, which is what the final
    weight vector is built from.
    """

    members: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    best_loss: float = np.inf
    best_size: int = 0
    eval_count: int = 0

    @property
    def best_members(self) -> list[int]:
        return self.members[: self.best_size]


def ges_weight_from_counts(counts, n: int) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.int64)
    if n <= 0 or int(counts.sum()) != n:
        raise CountSumMismatch(f"counts sum to {int(counts.sum())}, expected N={n} > 0")
    return counts / n


def _candidate_loss(metric: MetricKind, pred_set: PredictionSet, mean: np.ndarray) -> float:
    if metric.needs_labels:
        return loss_of(metric, pred_set, predict_labels(mean))
    return loss_of(metric, pred_set, mean)


def ges_search(pred_set: PredictionSet, metric: MetricKind, n_iters: int = 50) -> GesState:
    m = pred_set.n_models
    if m < 1:
        raise EmptyPool("no base models to select from")
    probs = pred_set.probs
    state = GesState()
    running = np.zeros(probs.shape[1:])
    for it in range(1, n_iters + 1):
        losses = np.empty(m)
        for j in range(m):
            losses[j] = _candidate_loss(metric, pred_set, (running + probs[j]) / it)
        state.eval_count += m
        pick = int(np.argmin(losses))  # first minimum: lowest model index on ties
        running = running + probs[pick]
        state.members.append(pick)
        state.losses.append(float(losses[pick]))
        if losses[pick] < state.best_loss:
            state.best_loss = float(losses[pick])
            state.best_size = it
    return state


def ges_fit(pred_set: PredictionSet, metric: MetricKind, n_iters: int = 50):
    """Run greedy selection and return ``(weights, eval_count)``.

    Weights are counts of each model in the best prefix of the selection
    list divided by that prefix's length.
    """
    state = ges_search(pred_set, metric, n_iters)
    counts = np.bincount(state.best_members, minlength=pred_set.n_models)
    return ges_weight_from_counts(counts, state.best_size), state.eval_count

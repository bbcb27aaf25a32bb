"""Stacking baseline: L2-regularized multinomial logistic regression on the
concatenated base-model probabilities, trained by full-batch gradient descent
with a cap on the number of epochs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import MetricKind, PosthocError, PredictionSet
from .metrics import SingleClassError

ARMIJO_C = 1e-4
GRAD_TOL = 1e-8


class DimensionMismatch(PosthocError):
    pass


@dataclass
class StackerModel:
    coef: np.ndarray  # (c, m*c)
    intercept: np.ndarray  # (c,)
    reg_strength: float = 1.0
    max_epochs: int = 0
    epochs: int = 0
    losses: list | None = None


def stack_features(pred_set: PredictionSet) -> np.ndarray:
    """``(n, m*c)`` matrix, columns ordered model-major like the CSV layout."""
    return pred_set.probs.transpose(1, 0, 2).reshape(pred_set.n_instances, -1)


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def objective(coef, intercept, X, Y, reg_strength: float):
    """Mean cross-entropy plus ``||coef||^2 / (2 C n)``, and its gradient.

    ``Y`` is the one-hot label matrix. Returns ``(loss, grad_coef, grad_intercept)``.
    """
    n = X.shape[0]
    z = X @ coef.T + intercept
    zmax = z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z - zmax).sum(axis=1, keepdims=True)) + zmax
    logp = z - logsum
    reg = 1.0 / (reg_strength * n)
    loss = -np.sum(Y * logp) / n + 0.5 * reg * np.sum(coef ** 2)
    diff = (np.exp(logp) - Y) / n
    return loss, diff.T @ X + reg * coef, diff.sum(axis=0)


def stacker_fit(pred_set: PredictionSet, metric: MetricKind | None = None,
                budget: int | None = None, reg_strength: float = 1.0) -> StackerModel:
    """Fit the stacker; ``budget`` (default ``m * 50``) caps gradient steps.

    ``metric`` is accepted for interface symmetry with the other fitters; the
    stacker always minimizes cross-entropy.
    """
    X = stack_features(pred_set)
    y = pred_set.labels
    c = pred_set.n_classes
    if np.unique(y).size < 2:
        raise SingleClassError("stacking needs at least two classes in the training labels")
    if budget is None:
        budget = pred_set.n_models * 50
    Y = np.eye(c)[y]
    coef = np.zeros((c, X.shape[1]))
    intercept = np.zeros(c)
    loss, g_coef, g_int = objective(coef, intercept, X, Y, reg_strength)
    losses = [loss]
    step = 1.0
    epochs = 0
    while epochs < budget:
        gnorm2 = np.sum(g_coef ** 2) + np.sum(g_int ** 2)
        if np.sqrt(gnorm2) < GRAD_TOL:
            break
        while True:
            new_coef = coef - step * g_coef
            new_int = intercept - step * g_int
            new_loss, new_g_coef, new_g_int = objective(new_coef, new_int, X, Y, reg_strength)
            if new_loss <= loss - ARMIJO_C * step * gnorm2:
                break
            step *= 0.5
            if step < 1e-20:
                break
        if step < 1e-20:
            break
        coef, intercept = new_coef, new_int
        loss, g_coef, g_int = new_loss, new_g_coef, new_g_int
        losses.append(loss)
        epochs += 1
        step *= 2.0
    return StackerModel(coef, intercept, reg_strength, budget, epochs, losses)


def stacker_predict(model: StackerModel, pred_set: PredictionSet) -> np.ndarray:
    X = stack_features(pred_set)
    if X.shape[1] != model.coef.shape[1] or pred_set.n_classes != model.coef.shape[0]:
        raise DimensionMismatch(
            f"stacker expects {model.coef.shape[1]} features, got {X.shape[1]}")
    return _softmax_rows(X @ model.coef.T + model.intercept)

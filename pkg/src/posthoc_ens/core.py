"""Domain types shared across the package and validation of ingested predictions."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ROW_SUM_TOL = 1e-6


class PosthocError(Exception):
    """Base class for all errors raised by this package."""


class RowSumError(PosthocError):
    pass


class LabelRangeError(PosthocError):
    pass


class ModelCountMismatch(PosthocError):
    pass


class LengthMismatch(PosthocError):
    pass


class NonFiniteInput(PosthocError):
    pass


class TaskKind(enum.Enum):
    BINARY = "binary"
    MULTICLASS = "multiclass"

    @classmethod
    def for_classes(cls, n_classes: int) -> "TaskKind":
        if n_classes < 2:
            raise ValueError(f"need at least 2 classes, got {n_classes}")
        return cls.BINARY if n_classes == 2 else cls.MULTICLASS


class MetricKind(enum.Enum):
    BALANCED_ACCURACY = "balanced-accuracy"
    ROC_AUC = "roc-auc"

    @property
    def needs_labels(self) -> bool:
        return self is MetricKind.BALANCED_ACCURACY


def _fix_row(row: np.ndarray) -> bool:
    """Replace one entry by ``1 - sum(others)`` (give or take a few ulps) so
    that ``row.sum() == 1`` holds exactly. Largest entries are tried first."""
    for k in np.argsort(-row, kind="stable"):
        orig = row[k]
        row[k] = 0.0
        base = 1.0 - row.sum()
        lo = hi = base
        cands = [base]
        for _ in range(8):
            lo, hi = np.nextafter(lo, -np.inf), np.nextafter(hi, np.inf)
            cands += [lo, hi]
        for v in cands:
            if 0.0 <= v <= 1.0:
                row[k] = v
                if row.sum() == 1.0:
                    return True
        row[k] = orig
    return False


def renormalize_rows(probs: np.ndarray) -> np.ndarray:
    """Divide every row by its sum, then shift single entries by a few ulps
    where needed so that ``out.sum(axis=-1) == 1`` holds bit-exactly."""
    out = np.ascontiguousarray(probs / probs.sum(axis=-1, keepdims=True))
    flat = out.reshape(-1, out.shape[-1])  # view: writes land in ``out``
    for _ in range(3):
        bad = np.flatnonzero(out.sum(axis=-1).reshape(-1) != 1.0)
        if bad.size == 0:
            break
        for i in bad:
            _fix_row(flat[i])
    return out


@dataclass(frozen=True, eq=False)
class PredictionSet:
    """Class-probability predictions of a pool of base models on one split.

    ``probs`` has shape ``(m, n_instances, n_classes)``.
    """

    probs: np.ndarray
    labels: np.ndarray
    model_names: tuple[str, ...]

    def __post_init__(self):
        self.probs.setflags(write=False)
        self.labels.setflags(write=False)

    @property
    def n_models(self) -> int:
        return self.probs.shape[0]

    @property
    def n_instances(self) -> int:
        return self.probs.shape[1]

    @property
    def n_classes(self) -> int:
        return self.probs.shape[2]

    @property
    def task(self) -> TaskKind:
        return TaskKind.for_classes(self.n_classes)

    def subset(self, models: Sequence[int]) -> "PredictionSet":
        idx = list(models)
        return PredictionSet(self.probs[idx].copy(), self.labels.copy(),
                             tuple(self.model_names[i] for i in idx))


def validate_prediction_set(probs, labels, n_models: int, n_classes: int,
                            model_names: Sequence[str] | None = None,
                            for_ensembling: bool = True) -> PredictionSet:
    """Check raw predictions against the declared pool shape and build a
    :class:`PredictionSet`.

    ``probs`` may be given as ``(m, n, c)`` or as the flat on-disk layout
    ``(n, m * c)`` (model-major columns). Rows must sum to 1 within
    ``ROW_SUM_TOL``; they are then renormalized to sum to exactly 1.
    Pass ``for_ensembling=False`` to accept a single-model pool (SingleBest).
    """
    probs = np.array(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if n_classes < 2:
        raise ValueError(f"n_classes must be >= 2, got {n_classes}")
    if probs.ndim == 2:
        if probs.shape[1] != n_models * n_classes:
            raise ModelCountMismatch(
                f"expected {n_models * n_classes} probability columns, got {probs.shape[1]}")
        probs = probs.reshape(probs.shape[0], n_models, n_classes).transpose(1, 0, 2).copy()
    if probs.ndim != 3 or probs.shape[0] != n_models or probs.shape[2] != n_classes:
        raise ModelCountMismatch(
            f"probabilities of shape {probs.shape} do not match m={n_models}, c={n_classes}")
    if n_models < 1 or (for_ensembling and n_models < 2):
        raise ModelCountMismatch(f"pool of {n_models} model(s) cannot be ensembled")
    if probs.shape[1] == 0:
        raise ValueError("prediction set has no instances")
    if labels.shape != (probs.shape[1],):
        raise LengthMismatch(f"{labels.shape[0]} labels for {probs.shape[1]} instances")

    if not np.all(np.isfinite(probs)):
        raise NonFiniteInput("non-finite probability")
    if probs.min() < 0.0 or probs.max() > 1.0:
        raise RowSumError("probability outside [0, 1]")
    sums = probs.sum(axis=2)
    dev = np.abs(sums - 1.0)
    if dev.max() > ROW_SUM_TOL:
        b, i = np.unravel_index(dev.argmax(), dev.shape)
        raise RowSumError(f"model {b} instance {i}: row sums to {sums[b, i]!r}")

    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(np.equal(np.mod(labels, 1), 0)):
            raise LabelRangeError("labels must be integer class indices")
    labels = labels.astype(np.int64)
    if labels.min() < 0 or labels.max() >= n_classes:
        raise LabelRangeError(f"labels must lie in [0, {n_classes})")

    if model_names is None:
        model_names = [f"m{b}" for b in range(n_models)]
    model_names = tuple(str(s) for s in model_names)
    if len(model_names) != n_models or len(set(model_names)) != n_models:
        raise ModelCountMismatch("model_names must be m distinct strings")

    return PredictionSet(renormalize_rows(probs), labels, model_names)


@dataclass(frozen=True, eq=False)
class FoldData:
    dataset_name: str
    fold_id: int
    val: PredictionSet
    test: PredictionSet
    label_map: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.fold_id < 10:
            raise ValueError(f"fold_id {self.fold_id} outside [0, 10)")
        if (self.val.n_models != self.test.n_models
                or self.val.n_classes != self.test.n_classes
                or self.val.model_names != self.test.model_names):
            raise ModelCountMismatch("validation and test pools disagree")

    @property
    def task(self) -> TaskKind:
        return self.val.task

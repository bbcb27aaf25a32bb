"""Rank-based comparison statistics across datasets."""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaincc

from .core import PosthocError
from .metrics import midranks

# Two-tailed Nemenyi critical values at alpha = 0.05 for k = 2..10 methods:
# studentized range quantile q(0.95; k, inf) divided by sqrt(2).
NEMENYI_Q05 = {2: 1.960, 3: 2.343, 4: 2.569, 5: 2.728, 6: 2.850,
               7: 2.949, 8: 3.031, 9: 3.102, 10: 3.164}

PENALTY = -10.0


class MissingCell(PosthocError):
    pass


class DegenerateTable(PosthocError):
    pass


class KOutOfRange(PosthocError):
    pass


class TableMismatch(PosthocError):
    pass


class Split(enum.Enum):
    VALIDATION = "val"
    TEST = "test"


@dataclass
class ScoreTable:
    datasets: list[str]
    methods: list[str]
    scores: np.ndarray  # (n_datasets, n_methods), higher is better
    split: Split = Split.TEST

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.shape != (len(self.datasets), len(self.methods)):
            raise ValueError(f"score matrix {self.scores.shape} does not match "
                             f"{len(self.datasets)} datasets x {len(self.methods)} methods")


@dataclass
class RankReport:
    methods: list[str]
    mean_ranks: np.ndarray
    friedman_stat: float
    friedman_p: float
    cd: float
    pairwise_significant: np.ndarray
    absolute_ranks_val: np.ndarray | None = None
    absolute_ranks_test: np.ndarray | None = None


def _rank_rows(scores: np.ndarray) -> np.ndarray:
    """Per row, rank 1 = highest score, ties share the average rank."""
    if np.isnan(scores).any():
        raise MissingCell("score table has missing cells")
    return np.vstack([midranks(-row) for row in scores])


def mean_ranks(table: ScoreTable) -> np.ndarray:
    return _rank_rows(table.scores).mean(axis=0)


def friedman_test(table: ScoreTable) -> tuple[float, float]:
    """Friedman chi-square with tie correction; p-value from chi2(k - 1)."""
    n, k = table.scores.shape
    if n < 2 or k < 2:
        raise DegenerateTable(f"need at least 2 datasets and 2 methods, got {n}x{k}")
    if k == 2:
        warnings.warn("Friedman test with two methods has little power", stacklevel=2)
    ranks = _rank_rows(table.scores)
    rank_sums = ranks.sum(axis=0)
    stat = 12.0 / (n * k * (k + 1)) * np.sum(rank_sums ** 2) - 3.0 * n * (k + 1)
    ties = 0.0
    for row in table.scores:
        _, counts = np.unique(row, return_counts=True)
        ties += np.sum(counts ** 3 - counts)
    correction = 1.0 - ties / (n * k * (k * k - 1))
    if correction <= 0:
        # every row fully tied: no evidence of any difference
        return 0.0, 1.0
    stat = max(stat / correction, 0.0)
    return float(stat), float(gammaincc((k - 1) / 2.0, stat / 2.0))


def nemenyi_cd(k: int, n: int, alpha: float = 0.05) -> float:
    if alpha != 0.05:
        raise ValueError("only alpha = 0.05 critical values are tabulated")
    if k not in NEMENYI_Q05:
        raise KOutOfRange(f"k={k} outside the tabulated range 2..10")
    if n < 2:
        raise ValueError("need at least two datasets")
    return NEMENYI_Q05[k] * math.sqrt(k * (k + 1) / (6.0 * n))


def significant_pairs(ranks: np.ndarray, cd: float) -> np.ndarray:
    ranks = np.asarray(ranks)
    return np.abs(ranks[:, None] - ranks[None, :]) > cd


def rank_report(table: ScoreTable, alpha: float = 0.05) -> RankReport:
    ranks = mean_ranks(table)
    stat, p = friedman_test(table)
    n, k = table.scores.shape
    cd = nemenyi_cd(k, n, alpha)
    return RankReport(list(table.methods), ranks, stat, p, cd, significant_pairs(ranks, cd))


def normalized_improvement(scores, baseline: float, best: float | None = None) -> np.ndarray:
    """Rescale one dataset's scores so the baseline maps to -1 and the best to 0.

    If nothing beats the baseline, methods equal to it get -1 and methods
    below it get the -10 penalty.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if best is None:
        best = float(max(scores.max(), baseline))
    gap = best - baseline
    if gap != 0:
        return (scores - baseline) / gap - 1.0
    return np.where(scores < baseline, PENALTY, -1.0)


def normalized_improvement_table(table: ScoreTable, baseline_method: str) -> np.ndarray:
    b = table.methods.index(baseline_method)
    return np.vstack([normalized_improvement(row, row[b], row.max()) for row in table.scores])


def absolute_ranks(mean_rank_vec) -> np.ndarray:
    """Tie-averaged rank of each method's mean rank (1 = lowest mean rank)."""
    return midranks(np.asarray(mean_rank_vec, dtype=np.float64))


@dataclass
class RankChangeRow:
    method: str
    mean_rank_val: float
    mean_rank_test: float
    absolute_rank_val: float
    absolute_rank_test: float


def rank_change_table(val_table: ScoreTable, test_table: ScoreTable) -> list[RankChangeRow]:
    if val_table.methods != test_table.methods or val_table.datasets != test_table.datasets:
        raise TableMismatch("validation and test tables cover different datasets or methods")
    rv, rt = mean_ranks(val_table), mean_ranks(test_table)
    av, at = absolute_ranks(rv), absolute_ranks(rt)
    return [RankChangeRow(m, float(rv[j]), float(rt[j]), float(av[j]), float(at[j]))
            for j, m in enumerate(val_table.methods)]


def ensemble_size(w, tol: float = 0.0) -> int:
    return int(np.count_nonzero(np.abs(np.asarray(w)) > tol))


def cd_cliques(ranks: Sequence[float], cd: float) -> list[tuple[int, int]]:
    """Maximal runs of methods (positions in ascending rank order) whose
    rank spread is within ``cd``; these are the bars of a CD diagram."""
    r = np.sort(np.asarray(ranks, dtype=np.float64))
    bars = []
    last_end = -1
    for i in range(r.size):
        j = i
        while j + 1 < r.size and r[j + 1] - r[i] <= cd:
            j += 1
        if j > i and j > last_end:
            bars.append((i, j))
            last_end = j
    return bars

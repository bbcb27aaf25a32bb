"""Weight normalizers applied to CMA-ES candidates before aggregation.

All three map an unconstrained real vector onto the probability simplex:

* ``softmax_norm``: plain softmax.
* ``implicit_ges_norm``: softmax, then round to repetition counts out of
  ``n_hyp`` hypothetical greedy iterations and divide by the count total.
* ``explicit_ges_norm``: softmax, trim small weights, round, then repair the
  counts so they add up to exactly ``n_hyp``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import NonFiniteInput

N_HYP = 50


class AllZeroRepetitions(UserWarning):
    pass


@dataclass(frozen=True)
class NormalizedWeights:
    w: np.ndarray
    n_hyp: int | None = None
    counts: np.ndarray | None = None

    @property
    def nonzero_count(self) -> int:
        return int(np.count_nonzero(self.w))


def _check_finite(w_raw) -> np.ndarray:
    w_raw = np.asarray(w_raw, dtype=np.float64)
    if w_raw.ndim != 1 or w_raw.size == 0:
        raise ValueError("expected a non-empty weight vector")
    if not np.all(np.isfinite(w_raw)):
        raise NonFiniteInput("weight vector has non-finite entries")
    return w_raw


def _softmax(w: np.ndarray) -> np.ndarray:
    e = np.exp(w - w.max())
    return e / e.sum()


def round_half_up(x) -> np.ndarray:
    return np.floor(np.asarray(x) + 0.5).astype(np.int64)


def softmax_norm(w_raw) -> NormalizedWeights:
    return NormalizedWeights(_softmax(_check_finite(w_raw)))


def implicit_ges_round(s, n_hyp: int = N_HYP) -> NormalizedWeights:
    """Round simplex weights ``s`` to repetition counts and divide by their
    total, which need not equal ``n_hyp``."""
    s = np.asarray(s, dtype=np.float64)
    r = round_half_up(s * n_hyp)
    total = int(r.sum())
    if total == 0:
        warnings.warn("all repetition counts rounded to zero; using the uniform vector",
                      AllZeroRepetitions, stacklevel=2)
        return NormalizedWeights(np.full(s.size, 1.0 / s.size), n_hyp, None)
    return NormalizedWeights(r / total, n_hyp, r)


def implicit_ges_norm(w_raw, n_hyp: int = N_HYP) -> NormalizedWeights:
    return implicit_ges_round(_softmax(_check_finite(w_raw)), n_hyp)


def repair_counts(r: np.ndarray, n_hyp: int) -> np.ndarray:
    """Adjust integer repetition counts so they sum to ``n_hyp``.

    Surplus: decrement nonzero counts by one, smallest count first (lower
    index first on ties), so single repetitions are trimmed first. If that
    pass leaves a surplus, keep cycling but never below one; only if that
    stalls are the smallest entries zeroed. After rounding softmax values
    the surplus is at most half the nonzero count, so one pass suffices.
    Deficit: spread increments evenly over the nonzero counts; leftover units
    go to the largest counts, lower index first on ties.
    """
    r = np.array(r, dtype=np.int64)
    excess = int(r.sum()) - n_hyp
    if excess > 0:
        order = np.lexsort((np.arange(r.size), r))  # ascending value, then index
        order = order[r[order] > 0]
        for i in order[:excess]:
            r[i] -= 1
        excess -= min(excess, order.size)
        order = order[r[order] > 0]
        floor = 1
        while excess > 0:
            progressed = False
            for i in order:
                if excess == 0:
                    break
                if r[i] > floor:
                    r[i] -= 1
                    excess -= 1
                    progressed = True
            if not progressed:
                if floor == 0:
                    raise RuntimeError("cannot reduce counts further")
                floor = 0
    elif excess < 0:
        nonzero = np.flatnonzero(r > 0)
        if nonzero.size == 0:
            raise ValueError("no nonzero counts to increment")
        base, extra = divmod(-excess, nonzero.size)
        r[nonzero] += base
        if extra:
            by_size = nonzero[np.lexsort((nonzero, -r[nonzero]))]
            r[by_size[:extra]] += 1
    return r


def explicit_ges_round(s, n_hyp: int = N_HYP) -> NormalizedWeights:
    """Trim, round and repair simplex weights ``s`` into counts summing to ``n_hyp``."""
    s = np.asarray(s, dtype=np.float64)
    s = np.where(s <= 0.5 / n_hyp, 0.0, s)
    if not s.any():
        return NormalizedWeights(np.full(s.size, 1.0 / s.size), n_hyp, None)
    r = repair_counts(round_half_up(s * n_hyp), n_hyp)
    return NormalizedWeights(r / n_hyp, n_hyp, r)


def explicit_ges_norm(w_raw, n_hyp: int = N_HYP) -> NormalizedWeights:
    return explicit_ges_round(_softmax(_check_finite(w_raw)), n_hyp)


NORMALIZERS = {
    "softmax": softmax_norm,
    "implicit": implicit_ges_norm,
    "explicit": explicit_ges_norm,
}

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from posthoc_ens.core import MetricKind, PredictionSet
from posthoc_ens.ges import CountSumMismatch, ges_fit, ges_search, ges_weight_from_counts
from conftest import random_pred_set
from oracles import exhaustive_multisets, greedy_oracle, mean_of_members


def counts_of(w, n):
    """Integer counts k with w == k / n bit-exactly, or AssertionError."""
    k = np.rint(np.asarray(w) * n).astype(np.int64)
    assert np.array_equal(k / n, w)
    assert k.sum() == n
    return k


def complementary_set():
    # models 0 and 1 each miss one positive; their average gets all four right
    p1 = np.array([[.1, .1, .9, .4], [.1, .1, .4, .9], [.6, .4, .6, .4]])
    probs = np.stack([1 - p1, p1], axis=-1)
    return PredictionSet(probs, np.array([0, 0, 1, 1]), ("a", "b", "c"))


def test_weight_from_counts():
    np.testing.assert_array_equal(ges_weight_from_counts([2, 1, 0], 3), [2 / 3, 1 / 3, 0])
    np.testing.assert_array_equal(ges_weight_from_counts([5, 0, 0], 5), [1, 0, 0])
    with pytest.raises(CountSumMismatch):
        ges_weight_from_counts([0, 0], 0)
    with pytest.raises(CountSumMismatch):
        ges_weight_from_counts([1, 1], 3)


def test_single_model_pool(rng):
    ps = random_pred_set(rng, 1, 20, 2)
    w, evals = ges_fit(ps, MetricKind.ROC_AUC, n_iters=7)
    assert w.tolist() == [1.0] and evals == 7


def test_identical_models_tie_to_lowest_index(rng):
    base = random_pred_set(rng, 1, 25, 2)
    ps = PredictionSet(np.concatenate([base.probs, base.probs]), base.labels, ("a", "b"))
    for metric in MetricKind:
        state = ges_search(ps, metric, n_iters=4)
        assert state.members[0] == 0
        members, _, best = greedy_oracle(ps.probs, ps.labels, metric.value, 4)
        assert state.members == members and state.best_size == best
        w, _ = ges_fit(ps, metric, n_iters=1)
        assert w.tolist() == [1.0, 0.0]


def test_complementary_models_found():
    ps = complementary_set()
    table = exhaustive_multisets(ps.probs, ps.labels, "balanced-accuracy", 3)
    assert min(table.values()) == 0.0
    assert min(v for k, v in table.items() if len(k) == 1) == 0.25
    w, evals = ges_fit(ps, MetricKind.BALANCED_ACCURACY, n_iters=3)
    assert w.tolist() == [0.5, 0.5, 0.0]
    assert evals == 9


def test_best_prefix_not_last_iteration():
    ps = complementary_set()
    state = ges_search(ps, MetricKind.BALANCED_ACCURACY, n_iters=10)
    assert state.best_size == 2 and len(state.members) == 10


def test_incremental_mean_matches_recomputation(rng):
    ps = random_pred_set(rng, 5, 60, 3)
    state = ges_search(ps, MetricKind.ROC_AUC, n_iters=30)
    running = np.zeros(ps.probs.shape[1:])
    for it, j in enumerate(state.members, start=1):
        running = running + ps.probs[j]
        recomputed = ps.probs[state.members[:it]].mean(axis=0)
        assert np.max(np.abs(running / it - recomputed)) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 12), st.integers(2, 4), st.integers(0, 2 ** 32 - 1),
       st.sampled_from(list(MetricKind)))
def test_pseudo_discrete_and_monotone(m, n_iters, c, seed, metric):
    ps = random_pred_set(np.random.default_rng(seed), m, 25, c)
    state = ges_search(ps, metric, n_iters)
    w, evals = ges_fit(ps, metric, n_iters)
    assert evals == m * n_iters
    counts_of(w, state.best_size)
    best_so_far = np.minimum.accumulate(state.losses)
    assert state.best_loss == best_so_far[-1]
    assert np.all(np.diff(best_so_far) <= 0)

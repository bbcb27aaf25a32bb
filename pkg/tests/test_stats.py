import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from posthoc_ens.stats import (NEMENYI_Q05, PENALTY, DegenerateTable, KOutOfRange, MissingCell,
                               ScoreTable, Split, TableMismatch, absolute_ranks, cd_cliques,
                               ensemble_size, friedman_test, mean_ranks, nemenyi_cd,
                               normalized_improvement, normalized_improvement_table,
                               rank_change_table, rank_report, significant_pairs)


def table(scores, split=Split.TEST):
    scores = np.asarray(scores, dtype=float)
    n, k = scores.shape
    return ScoreTable([f"d{i}" for i in range(n)], [f"m{j}" for j in range(k)], scores, split)


def test_mean_rank_examples():
    assert mean_ranks(table([[0.9, 0.5]] * 10)).tolist() == [1.0, 2.0]
    assert mean_ranks(table(np.full((4, 5), 0.3))).tolist() == [3.0] * 5
    assert mean_ranks(table([[0.9, 0.8, 0.8]])).tolist() == [1.0, 2.5, 2.5]


def test_missing_cell():
    with pytest.raises(MissingCell):
        mean_ranks(table([[0.9, np.nan], [0.1, 0.2]]))


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 20), st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_rank_sum_invariant(n, k, seed):
    rng = np.random.default_rng(seed)
    scores = rng.integers(0, 4, size=(n, k)) / 4  # plenty of ties
    r = mean_ranks(table(scores))
    assert abs(r.sum() - k * (k + 1) / 2) < 1e-12
    assert r.min() >= 1 and r.max() <= k


def test_friedman_closed_form_maximum():
    stat, p = friedman_test(table([[0.9, 0.8, 0.7]] * 10))
    assert stat == pytest.approx(20.0, abs=1e-12)
    assert p < 1e-3
    assert p == pytest.approx(math.exp(-10), rel=1e-12)  # chi2(2) survival at 20


def test_friedman_all_equal():
    assert friedman_test(table(np.full((6, 4), 0.5))) == (0.0, 1.0)


def test_friedman_degenerate():
    with pytest.raises(DegenerateTable):
        friedman_test(table([[0.1, 0.2, 0.3]]))


@pytest.mark.parametrize("seed", range(5))
def test_friedman_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    scores = rng.random((30, 4))
    scores[::3, 1] = scores[::3, 0]  # inject ties
    stat, p = friedman_test(table(scores))
    ref = sps.friedmanchisquare(*scores.T)
    assert abs(stat - ref.statistic) < 1e-9
    assert abs(p - ref.pvalue) < 1e-9


def test_friedman_invariant_under_monotone_transform(rng):
    scores = rng.random((12, 5))
    assert friedman_test(table(scores)) == friedman_test(table(np.exp(3 * scores) - 7))


def test_cd_reference_value():
    assert nemenyi_cd(5, 30) == pytest.approx(1.1137, abs=5e-4)
    assert nemenyi_cd(5, 30) == 2.728 * math.sqrt(30 / 180)


def test_q_table_matches_studentized_range():
    for k, q in NEMENYI_Q05.items():
        ref = sps.studentized_range.ppf(0.95, k, np.inf) / math.sqrt(2)
        assert abs(q - ref) < 1e-3, k


def test_cd_monotone_and_limits():
    for k in range(2, 11):
        cds = [nemenyi_cd(k, n) for n in range(2, 60)]
        assert all(a > b for a, b in zip(cds, cds[1:]))
    for n in (2, 10, 100):
        cds = [nemenyi_cd(k, n) for k in range(2, 11)]
        assert all(a < b for a, b in zip(cds, cds[1:]))
    assert nemenyi_cd(2, 10**12) < 1e-5
    with pytest.raises(KOutOfRange):
        nemenyi_cd(11, 30)
    with pytest.raises(KOutOfRange):
        nemenyi_cd(1, 30)


def test_significant_pairs():
    sig = significant_pairs(np.array([1.0, 2.0, 3.5]), 1.0)
    # |difference| == CD is not significant
    assert sig.tolist() == [[False, False, True], [False, False, True], [True, True, False]]


def test_rank_report(rng):
    rep = rank_report(table(rng.random((20, 4))))
    assert rep.cd == nemenyi_cd(4, 20)
    assert rep.pairwise_significant.shape == (4, 4)


def test_normalized_improvement_examples():
    assert normalized_improvement([0.9], 0.8, 0.9).tolist() == [0.0]
    assert normalized_improvement([0.85], 0.8, 0.9)[0] == pytest.approx(-0.5, abs=1e-15)
    assert normalized_improvement([0.65], 0.7, 0.7).tolist() == [PENALTY]
    assert normalized_improvement([0.7, 0.65], 0.7, 0.7).tolist() == [-1.0, -10.0]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=8), st.integers(0, 7))
def test_normalized_improvement_properties(scores, b):
    scores = np.array(scores)
    b = b % scores.size
    out = normalized_improvement(scores, scores[b], scores.max())
    assert np.all(out <= 0)
    if scores.max() != scores[b]:
        assert out.max() == 0.0
        assert out[b] == -1.0
        order = np.argsort(scores, kind="stable")
        assert np.all(np.diff(out[order]) >= 0)


def test_normalized_improvement_table():
    t = table([[0.8, 0.9, 0.85], [0.7, 0.7, 0.65]])
    ni = normalized_improvement_table(t, "m0")
    np.testing.assert_allclose(ni, [[-1.0, 0.0, -0.5], [-1.0, -1.0, -10.0]], atol=1e-15)


def test_rank_change_examples():
    val = table([[0.9, 0.8, 0.7]] * 3, Split.VALIDATION)
    test = table([[0.8, 0.9, 0.7]] * 3)
    rows = rank_change_table(val, test)
    assert [(r.absolute_rank_val, r.absolute_rank_test) for r in rows] == [(1, 2), (2, 1), (3, 3)]
    tied = table([[0.9, 0.8, 0.7], [0.8, 0.9, 0.7]], Split.VALIDATION)
    rows = rank_change_table(tied, table([[0.9, 0.8, 0.7]] * 2))
    assert [r.absolute_rank_val for r in rows] == [1.5, 1.5, 3.0]
    assert rows[0].mean_rank_val == 1.5 and rows[0].absolute_rank_test == 1.0


def test_rank_change_mismatch():
    with pytest.raises(TableMismatch):
        rank_change_table(table([[1, 2]]), table([[1, 2], [3, 4]]))


def test_absolute_ranks():
    assert absolute_ranks([2.0, 1.0, 2.0]).tolist() == [2.5, 1.0, 2.5]


def test_ensemble_size():
    assert ensemble_size([0, 1, 0]) == 1
    assert ensemble_size(np.full(7, 1 / 7)) == 7
    assert ensemble_size(np.array([23, 18, 9, 0]) / 50) == 3
    assert ensemble_size([1e-13, 0.5, -0.2], tol=1e-12) == 2


def test_cd_cliques():
    assert cd_cliques([1.0, 1.5, 3.0, 3.2], 0.6) == [(0, 1), (2, 3)]
    assert cd_cliques([1.0, 2.0, 3.0], 1.0) == [(0, 1), (1, 2)]
    assert cd_cliques([1.0, 2.0, 3.0], 5.0) == [(0, 2)]
    assert cd_cliques([1.0, 3.0], 1.0) == []

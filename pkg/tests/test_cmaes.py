import warnings

import numpy as np
import pytest

from posthoc_ens.aggregate import EvalMode, evaluate_weights
from posthoc_ens.cmaes import (CMAES, BudgetTooSmall, CmaesParams, NonFiniteLoss, cmaes_ask,
                               cmaes_fit_ensemble, cmaes_search, cmaes_tell, minimize,
                               single_best_index)
from posthoc_ens.core import MetricKind, ModelCountMismatch, PredictionSet
from conftest import random_pred_set


def sphere(center):
    return lambda x: float(np.sum((x - center) ** 2))


def test_default_params():
    p = CmaesParams.default(np.zeros(10))
    assert p.lam == 4 + int(3 * np.log(10)) == 10
    assert p.mu == 5
    assert np.all(np.diff(p.weights) < 0) and np.all(p.weights > 0)
    assert abs(p.weights.sum() - 1) < 1e-15
    assert 1 <= p.mueff <= p.mu
    with pytest.raises(ValueError):
        CmaesParams.default(np.zeros(3), sigma0=0.0)
    with pytest.raises(ValueError):
        CmaesParams.default(np.zeros(3), lam=1)


def test_ask_is_deterministic():
    a = CMAES(CmaesParams.default(np.zeros(4), 0.3, seed=7))
    b = CMAES(CmaesParams.default(np.zeros(4), 0.3, seed=7))
    for _ in range(5):
        xa, xb = cmaes_ask(a), cmaes_ask(b)
        np.testing.assert_array_equal(xa, xb)
        f = [float(np.sum(x ** 2)) for x in xa]
        cmaes_tell(a, xa, f)
        cmaes_tell(b, xb, f)
    np.testing.assert_array_equal(a.mean, b.mean)
    assert a.sigma == b.sigma


def test_tiny_sigma_collapses_onto_mean():
    es = CMAES(CmaesParams.default([0.7], sigma0=1e-300, seed=1))
    np.testing.assert_allclose(es.ask(), 0.7, rtol=0, atol=1e-290)


def test_sample_covariance_matches_sigma_squared_identity():
    es = CMAES(CmaesParams.default(np.zeros(2), sigma0=0.5, seed=3, lam=100_000))
    X = es.ask()
    cov = np.cov(X.T)
    np.testing.assert_allclose(np.diag(cov), 0.25, rtol=0.05)
    assert abs(cov[0, 1]) < 0.05 * 0.25


def test_equal_losses_recombine_in_submission_order():
    es = CMAES(CmaesParams.default(np.zeros(3), 0.5, seed=2))
    X = es.ask()
    p = es.params
    expected = p.weights @ X[: p.mu]
    es.tell(X, np.ones(len(X)))
    np.testing.assert_allclose(es.mean, expected, rtol=0, atol=1e-15)


def test_best_seen_monotone_and_c_symmetric(rng):
    f = sphere(rng.normal(size=6))
    es = CMAES(CmaesParams.default(np.zeros(6), 0.3, seed=4))
    prev = np.inf
    for _ in range(60):
        X = es.ask()
        es.tell(X, [f(x) for x in X])
        assert es.best_loss <= prev
        prev = es.best_loss
        assert np.max(np.abs(es.C - es.C.T)) <= 1e-12
        assert f(es.best_x) == es.best_loss


def test_non_finite_loss_rejected():
    es = CMAES(CmaesParams.default(np.zeros(2), 0.3))
    X = es.ask()
    losses = np.zeros(len(X))
    losses[1] = np.nan
    with pytest.raises(NonFiniteLoss):
        es.tell(X, losses)
    with pytest.raises(NonFiniteLoss):
        es.observe(X[0], np.inf)


def test_sphere_five_dims_large_budget():
    es = minimize(sphere(np.arange(5) / 5), np.zeros(5), 0.3, budget=5000, seed=0)
    assert es.eval_count == 5000
    assert es.best_loss < 1e-9


@pytest.mark.parametrize("n", [2, 5, 10])
def test_sphere_median_over_seeds(n):
    center = np.linspace(-0.5, 0.5, n)
    best = [minimize(sphere(center), np.zeros(n), 0.3, 200 * n, seed).best_loss for seed in range(10)]
    assert np.median(best) < 1e-6


def test_covariance_reset_recovers():
    es = CMAES(CmaesParams.default(np.zeros(3), 0.3, seed=0))
    X = es.ask()
    es.tell(X, np.arange(len(X), dtype=float))
    es.C[0, 0] = np.nan
    es._update_eigen()
    np.testing.assert_array_equal(es.C, np.eye(3))
    assert es.sigma == 0.3
    np.testing.assert_array_equal(es.mean, es.best_x)


def pool_with_strong_first_model(rng):
    ps = random_pred_set(rng, 3, 60, 2)
    probs = ps.probs.copy()
    probs[0] = np.eye(2)[ps.labels] * 0.8 + 0.1
    return PredictionSet(probs, ps.labels, ps.model_names)


def test_x0_is_single_best_one_hot(rng):
    ps = pool_with_strong_first_model(rng)
    for metric in MetricKind:
        assert single_best_index(ps, metric) == 0
        fit = cmaes_search(ps, metric, None, seed=1)
        assert fit.x0.tolist() == [1.0, 0.0, 0.0]


@pytest.mark.parametrize("normalizer", [None, "softmax", "implicit", "explicit"])
@pytest.mark.parametrize("metric", list(MetricKind))
def test_budget_and_dominance(rng, normalizer, metric):
    ps = random_pred_set(rng, 5, 50, 3)
    fit = cmaes_search(ps, metric, normalizer, seed=11)
    assert fit.eval_count == 5 * 50
    assert fit.best_loss <= fit.x0_loss
    mode = EvalMode.RAW_CMAES if normalizer is None else EvalMode.NORMALIZED
    assert evaluate_weights(ps, fit.weights, metric, mode) == fit.best_loss
    if normalizer is not None:
        assert abs(fit.weights.sum() - 1) < 1e-12 and fit.weights.min() >= 0
    if normalizer == "explicit":
        k = np.rint(fit.weights * 50)
        assert np.array_equal(k / 50, fit.weights) and k.sum() == 50


def test_fit_is_deterministic(rng):
    ps = random_pred_set(rng, 4, 40, 2)
    a = cmaes_fit_ensemble(ps, MetricKind.ROC_AUC, "explicit", seed=5)
    b = cmaes_fit_ensemble(ps, MetricKind.ROC_AUC, "explicit", seed=5)
    np.testing.assert_array_equal(a[0], b[0])
    assert a[1] == b[1] == 200


def test_complementary_pair_not_worse_than_x0():
    # each model misses one positive; equal weights classify everything right
    p1 = np.array([[.1, .1, .9, .4], [.1, .1, .4, .9]])
    ps = PredictionSet(np.stack([1 - p1, p1], axis=-1), np.array([0, 0, 1, 1]), ("a", "b"))
    fit = cmaes_search(ps, MetricKind.BALANCED_ACCURACY, None, seed=0)
    assert fit.x0_loss == 0.25
    assert fit.best_loss <= fit.x0_loss


def test_small_budget_warns(rng):
    ps = random_pred_set(rng, 2, 30, 2)
    with pytest.warns(BudgetTooSmall):
        fit = cmaes_search(ps, MetricKind.ROC_AUC, None, evals_per_model=2)
    assert fit.eval_count == 4


def test_single_model_pool_rejected(rng):
    with pytest.raises(ModelCountMismatch):
        cmaes_search(random_pred_set(rng, 1, 20, 2), MetricKind.ROC_AUC)


def test_no_warning_at_default_budget(rng):
    ps = random_pred_set(rng, 2, 30, 2)
    with warnings.catch_warnings():
        warnings.simplefilter("error", BudgetTooSmall)
        cmaes_search(ps, MetricKind.ROC_AUC, None)

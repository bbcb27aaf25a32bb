"""A plain (mu/mu_w, lambda)-CMA-ES with an ask/tell interface, and the driver
that uses it to search ensemble weight vectors under a fixed loss budget."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .aggregate import EvalMode, evaluate_weights
from .core import MetricKind, ModelCountMismatch, PosthocError, PredictionSet
from .normalize import N_HYP, NORMALIZERS

log = logging.getLogger(__name__)

RNG_NAME = "numpy PCG64 / ziggurat normal"


class EigenFailure(PosthocError):
    pass


class NonFiniteLoss(PosthocError):
    pass


class BudgetTooSmall(UserWarning):
    pass


@dataclass(frozen=True)
class CmaesParams:
    """Strategy parameters with the usual defaults for dimension ``n``."""

    n: int
    x0: np.ndarray
    sigma0: float
    lam: int
    mu: int
    weights: np.ndarray
    mueff: float
    c_sigma: float
    d_sigma: float
    c_c: float
    c_1: float
    c_mu: float
    chi_n: float
    seed: int

    @classmethod
    def default(cls, x0, sigma0: float = 0.2, seed: int = 0, lam: int | None = None) -> "CmaesParams":
        x0 = np.array(x0, dtype=np.float64).ravel()
        n = x0.size
        if n < 1:
            raise ValueError("dimension must be positive")
        if not sigma0 > 0:
            raise ValueError("sigma0 must be positive")
        lam = lam if lam is not None else 4 + int(3 * math.log(n))
        if lam < 2:
            raise ValueError("population size must be at least 2")
        mu = lam // 2
        w = math.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
        w /= w.sum()
        mueff = 1.0 / np.sum(w ** 2)
        c_sigma = (mueff + 2) / (n + mueff + 5)
        d_sigma = 1 + 2 * max(0.0, math.sqrt((mueff - 1) / (n + 1)) - 1) + c_sigma
        c_c = (4 + mueff / n) / (n + 4 + 2 * mueff / n)
        c_1 = 2 / ((n + 1.3) ** 2 + mueff)
        c_mu = min(1 - c_1, 2 * (mueff - 2 + 1 / mueff) / ((n + 2) ** 2 + mueff))
        chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n ** 2))
        return cls(n, x0, float(sigma0), lam, mu, w, float(mueff), c_sigma, d_sigma,
                   c_c, c_1, c_mu, chi_n, int(seed))


class CMAES:
    """Stateful optimizer. ``ask`` returns ``lam`` candidates, ``tell`` takes
    their losses in the same order. ``best_x``/``best_loss`` track the best
    point ever told or passed to :meth:`observe`."""

    def __init__(self, params: CmaesParams):
        self.params = p = params
        self.rng = np.random.Generator(np.random.PCG64(p.seed))
        self.mean = p.x0.copy()
        self.sigma = p.sigma0
        self.C = np.eye(p.n)
        self.B = np.eye(p.n)
        self.D = np.ones(p.n)
        self.p_sigma = np.zeros(p.n)
        self.p_c = np.zeros(p.n)
        self.eval_count = 0
        self.n_tells = 0
        self.best_x = None
        self.best_loss = np.inf
        self._eigen_every = max(1, int(1 / (10 * p.n * (p.c_1 + p.c_mu))))
        self._last_eigen = 0

    def ask(self) -> np.ndarray:
        p = self.params
        z = self.rng.standard_normal((p.lam, p.n))
        y = (z * self.D) @ self.B.T
        return self.mean + self.sigma * y

    def observe(self, x, loss: float):
        """Record an evaluated point for best-so-far tracking only."""
        loss = float(loss)
        if not math.isfinite(loss):
            raise NonFiniteLoss(f"loss {loss!r}")
        self.eval_count += 1
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_x = np.array(x, dtype=np.float64)

    def tell(self, candidates, losses):
        p = self.params
        X = np.asarray(candidates, dtype=np.float64)
        f = np.asarray(losses, dtype=np.float64)
        if X.shape != (f.size, p.n):
            raise ValueError(f"{f.size} losses for candidates of shape {X.shape}")
        if f.size < p.mu:
            raise ValueError(f"need at least mu={p.mu} candidates")
        if not np.all(np.isfinite(f)):
            raise NonFiniteLoss("non-finite loss passed to tell")
        for x, loss in zip(X, f):
            self.observe(x, loss)

        order = np.argsort(f, kind="stable")[: p.mu]
        old_mean = self.mean
        y_sel = (X[order] - old_mean) / self.sigma
        y_w = p.weights @ y_sel
        self.mean = old_mean + self.sigma * y_w

        inv_sqrt_C_yw = self.B @ ((self.B.T @ y_w) / self.D)
        self.p_sigma = ((1 - p.c_sigma) * self.p_sigma
                        + math.sqrt(p.c_sigma * (2 - p.c_sigma) * p.mueff) * inv_sqrt_C_yw)
        self.n_tells += 1
        ps_norm = np.linalg.norm(self.p_sigma)
        h_sigma = (ps_norm / math.sqrt(1 - (1 - p.c_sigma) ** (2 * self.n_tells))
                   < (1.4 + 2 / (p.n + 1)) * p.chi_n)
        self.p_c = ((1 - p.c_c) * self.p_c
                    + h_sigma * math.sqrt(p.c_c * (2 - p.c_c) * p.mueff) * y_w)

        delta_h = (1 - h_sigma) * p.c_c * (2 - p.c_c)
        rank_mu = (y_sel.T * p.weights) @ y_sel
        self.C = ((1 - p.c_1 - p.c_mu + p.c_1 * delta_h) * self.C
                  + p.c_1 * np.outer(self.p_c, self.p_c)
                  + p.c_mu * rank_mu)
        self.C = (self.C + self.C.T) / 2

        self.sigma *= math.exp((p.c_sigma / p.d_sigma) * (ps_norm / p.chi_n - 1))

        if self.n_tells - self._last_eigen >= self._eigen_every:
            self._update_eigen()
        return self

    def _update_eigen(self):
        self._last_eigen = self.n_tells
        if not (np.all(np.isfinite(self.C)) and math.isfinite(self.sigma) and self.sigma > 0):
            self._reset()
            return
        try:
            vals, vecs = np.linalg.eigh(self.C)
        except np.linalg.LinAlgError:
            self._reset()
            vals, vecs = np.ones(self.params.n), np.eye(self.params.n)
        if vals.min() <= 0:
            # clamp tiny negative eigenvalues from round-off
            floor = max(vals.max(), 1.0) * 1e-14
            if vals.min() < -1e-8 * max(vals.max(), 1.0):
                self._reset()
                return
            vals = np.maximum(vals, floor)
            self.C = (vecs * vals) @ vecs.T
        self.B = vecs
        self.D = np.sqrt(vals)

    def _reset(self):
        p = self.params
        log.warning("CMA-ES covariance degenerated after %d tells; restarting from best point",
                    self.n_tells)
        self.C = np.eye(p.n)
        self.B = np.eye(p.n)
        self.D = np.ones(p.n)
        self.sigma = p.sigma0
        self.p_sigma = np.zeros(p.n)
        self.p_c = np.zeros(p.n)
        if self.best_x is not None:
            self.mean = self.best_x.copy()
        if not np.all(np.isfinite(self.mean)):
            raise EigenFailure("mean is non-finite and no finite best point exists")


def cmaes_ask(state: CMAES) -> np.ndarray:
    return state.ask()


def cmaes_tell(state: CMAES, candidates, losses) -> CMAES:
    return state.tell(candidates, losses)


def minimize(f, x0, sigma0: float, budget: int, seed: int = 0) -> CMAES:
    """Minimize ``f`` for at most ``budget`` evaluations; the last generation
    is truncated so exactly ``budget`` evaluations are spent."""
    es = CMAES(CmaesParams.default(x0, sigma0, seed))
    while es.eval_count < budget:
        X = es.ask()
        k = min(len(X), budget - es.eval_count)
        losses = [f(x) for x in X[:k]]
        if k == len(X):
            es.tell(X, losses)
        else:
            for x, loss in zip(X[:k], losses):
                es.observe(x, loss)
    return es


@dataclass
class CmaesFit:
    weights: np.ndarray
    raw_best: np.ndarray
    best_loss: float
    x0: np.ndarray
    x0_loss: float
    eval_count: int


def single_best_index(pred_set: PredictionSet, metric: MetricKind) -> int:
    """Model with the lowest validation loss on its own; lowest index on ties."""
    losses = [evaluate_weights(pred_set, np.eye(pred_set.n_models)[b], metric, EvalMode.NORMALIZED)
              for b in range(pred_set.n_models)]
    return int(np.argmin(losses))


def cmaes_search(pred_set: PredictionSet, metric: MetricKind, normalizer: str | None = None,
                 seed: int = 0, sigma0: float = 0.2, n_hyp: int = N_HYP,
                 evals_per_model: int = 50) -> CmaesFit:
    m = pred_set.n_models
    if m < 2:
        raise ModelCountMismatch("CMA-ES ensembling needs at least two base models")

    if normalizer is None:
        def transform(x):
            return x
        mode = EvalMode.RAW_CMAES
    else:
        norm = NORMALIZERS[normalizer]
        if normalizer == "softmax":
            def transform(x):
                return norm(x).w
        else:
            def transform(x):
                return norm(x, n_hyp).w
        mode = EvalMode.NORMALIZED

    def loss(x):
        return evaluate_weights(pred_set, transform(x), metric, mode)

    budget = m * evals_per_model
    x0 = np.zeros(m)
    x0[single_best_index(pred_set, metric)] = 1.0
    es = CMAES(CmaesParams.default(x0, sigma0, seed))
    if budget < es.params.lam:
        warnings.warn(f"budget {budget} is below the population size {es.params.lam}; "
                      "running one truncated generation", BudgetTooSmall, stacklevel=2)

    x0_loss = loss(x0)
    es.observe(x0, x0_loss)
    while es.eval_count < budget:
        X = es.ask()
        k = min(len(X), budget - es.eval_count)
        losses = [loss(x) for x in X[:k]]
        if k == len(X):
            es.tell(X, losses)
        else:
            for x, f in zip(X[:k], losses):
                es.observe(x, f)
    return CmaesFit(transform(es.best_x), es.best_x, es.best_loss, x0, x0_loss, es.eval_count)


def cmaes_fit_ensemble(pred_set: PredictionSet, metric: MetricKind, normalizer: str | None = None,
                       seed: int = 0, sigma0: float = 0.2, n_hyp: int = N_HYP):
    """Search a weight vector with CMA-ES; returns ``(weights, eval_count)``.

    ``normalizer`` is ``None`` (raw vector, softmax after aggregation for
    ROC AUC), ``"softmax"``, ``"implicit"`` or ``"explicit"``.
    """
    fit = cmaes_search(pred_set, metric, normalizer, seed, sigma0, n_hyp)
    return fit.weights, fit.eval_count

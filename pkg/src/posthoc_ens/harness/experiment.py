"""Run every (dataset, fold, metric, method) combination and collect scores."""
from __future__ import annotations

import json
import logging
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..aggregate import EvalMode, predictions_for, weighted_mean
from ..cmaes import cmaes_search, single_best_index
from ..core import FoldData, MetricKind, PosthocError, PredictionSet
from ..ges import ges_fit
from ..metrics import score_of
from ..stacking import stacker_fit, stacker_predict
from ..stats import ScoreTable, Split, ensemble_size
from .io import ingest_dataset, list_datasets

log = logging.getLogger(__name__)

METHODS = ("single-best", "ges", "cmaes", "cmaes-softmax", "cmaes-implicit",
           "cmaes-explicit", "stacking")
METRICS = tuple(k.value for k in MetricKind)
NORMALIZER_OF = {"cmaes": None, "cmaes-softmax": "softmax",
                 "cmaes-implicit": "implicit", "cmaes-explicit": "explicit"}
BUDGETED = ("ges", "stacking") + tuple(NORMALIZER_OF)


class ConfigError(PosthocError):
    pass


@dataclass
class RunConfig:
    data_root: str
    methods: list[str] = field(default_factory=lambda: list(METHODS))
    metrics: list[str] = field(default_factory=lambda: list(METRICS))
    n_iters: int = 50
    n_hyp: int = 50
    sigma0: float = 0.2
    seed: int | None = 0
    workers: int = 1
    output_dir: str = "results"

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("methods must be non-empty")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown methods {sorted(unknown)}")
        unknown = set(self.metrics) - set(METRICS)
        if unknown or not self.metrics:
            raise ConfigError(f"metrics must be a non-empty subset of {METRICS}")
        if self.seed is None and any(m.startswith("cmaes") for m in self.methods):
            raise ConfigError("a seed is required for cmaes methods")
        if self.n_iters < 1 or self.n_hyp < 1 or not self.sigma0 > 0 or self.workers < 1:
            raise ConfigError("n_iters, n_hyp, workers must be positive and sigma0 > 0")
        # keep the method order canonical so tables do not depend on config order
        self.methods = [m for m in METHODS if m in self.methods]
        self.metrics = [m for m in METRICS if m in self.metrics]

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"{path}: {e}") from e
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
        try:
            return cls(**raw)
        except TypeError as e:
            raise ConfigError(f"{path}: {e}") from e

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MethodRunRecord:
    dataset: str
    fold: int
    method: str
    metric: str
    split: str
    score: float
    loss_evals: int
    ensemble_size: int
    n_models: int
    task: str
    wall_time_ms: float
    weight_vector: list[float] | None = None
    error: str | None = None

    def sort_key(self):
        return (self.dataset, self.metric, self.fold, METHODS.index(self.method), self.split)


def derive_seed(seed: int, *parts) -> int:
    """Stable 64-bit seed for one work item, independent of scheduling."""
    words = [seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF]
    for p in parts:
        words.append(p if isinstance(p, int) else zlib.crc32(str(p).encode()))
    return int(np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)[0])


@dataclass
class FittedEnsemble:
    weights: np.ndarray | None
    loss_evals: int
    size: int
    mode: EvalMode = EvalMode.NORMALIZED
    stacker: object = None

    def predict(self, metric: MetricKind, pred_set: PredictionSet) -> np.ndarray:
        if self.stacker is not None:
            probs = stacker_predict(self.stacker, pred_set)
            return probs.argmax(axis=1) if metric.needs_labels else probs
        return predictions_for(metric, weighted_mean(pred_set, self.weights), self.mode)


def fit_method(method: str, val: PredictionSet, metric: MetricKind, config: RunConfig,
               seed: int) -> FittedEnsemble:
    m = val.n_models
    if method == "single-best":
        w = np.zeros(m)
        w[single_best_index(val, metric)] = 1.0
        return FittedEnsemble(w, m, 1)
    if method == "ges":
        w, evals = ges_fit(val, metric, config.n_iters)
        return FittedEnsemble(w, evals, ensemble_size(w))
    if method in NORMALIZER_OF:
        normalizer = NORMALIZER_OF[method]
        fit = cmaes_search(val, metric, normalizer, seed=seed, sigma0=config.sigma0,
                           n_hyp=config.n_hyp, evals_per_model=config.n_iters)
        if normalizer is None:
            return FittedEnsemble(fit.weights, fit.eval_count, ensemble_size(fit.weights, 1e-12),
                                  EvalMode.RAW_CMAES)
        tol = 1e-12 if normalizer == "softmax" else 0.0
        return FittedEnsemble(fit.weights, fit.eval_count, ensemble_size(fit.weights, tol))
    if method == "stacking":
        model = stacker_fit(val, metric, budget=m * config.n_iters)
        used = np.abs(model.coef).reshape(val.n_classes, m, val.n_classes).max(axis=(0, 2))
        return FittedEnsemble(None, model.epochs, ensemble_size(used), stacker=model)
    raise ConfigError(f"unknown method {method!r}")


def run_fold(fold: FoldData, config: RunConfig) -> list[MethodRunRecord]:
    records = []
    for metric_name in config.metrics:
        metric = MetricKind(metric_name)
        for method in config.methods:
            seed = derive_seed(config.seed or 0, fold.dataset_name, fold.fold_id, metric_name, method)
            base = dict(dataset=fold.dataset_name, fold=fold.fold_id, method=method,
                        metric=metric_name, n_models=fold.val.n_models, task=fold.task.value)
            t0 = time.perf_counter()
            try:
                fitted = fit_method(method, fold.val, metric, config, seed)
                scores = {}
                for split, ps in (("val", fold.val), ("test", fold.test)):
                    scores[split] = score_of(metric, ps.labels, fitted.predict(metric, ps)).value
            except PosthocError as e:
                log.warning("%s fold %d %s/%s failed: %s", fold.dataset_name, fold.fold_id,
                            metric_name, method, e)
                ms = (time.perf_counter() - t0) * 1e3
                for split in ("val", "test"):
                    records.append(MethodRunRecord(**base, split=split, score=math.nan,
                                                   loss_evals=0, ensemble_size=0,
                                                   wall_time_ms=ms, error=str(e)))
                continue
            ms = (time.perf_counter() - t0) * 1e3
            wv = None if fitted.weights is None else [float(x) for x in fitted.weights]
            for split in ("val", "test"):
                records.append(MethodRunRecord(**base, split=split, score=scores[split],
                                               loss_evals=fitted.loss_evals,
                                               ensemble_size=fitted.size,
                                               wall_time_ms=ms, weight_vector=wv))
    return records


def _run_dataset(args) -> list[MethodRunRecord]:
    dataset_dir, config = args
    out = []
    for fold in ingest_dataset(dataset_dir):
        out.extend(run_fold(fold, config))
    return out


def collect_records(config: RunConfig) -> list[MethodRunRecord]:
    dirs = list_datasets(config.data_root)
    jobs = [(d, config) for d in dirs]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(_run_dataset, jobs))
    else:
        chunks = [_run_dataset(j) for j in jobs]
    records = [r for chunk in chunks for r in chunk]
    records.sort(key=MethodRunRecord.sort_key)
    return records


def build_tables(records: list[MethodRunRecord], methods=None):
    """Fold-average scores into ScoreTables keyed ``(metric, task, split)``.

    A dataset is dropped from its group if any fold of any method failed.
    Returns ``(tables, dropped)`` where ``dropped`` maps group to dataset names.
    """
    if methods is None:
        methods = [m for m in METHODS if any(r.method == m for r in records)]
    cells: dict = {}
    failed: set = set()
    for r in records:
        if r.error is not None or not math.isfinite(r.score):
            failed.add((r.metric, r.dataset))
            continue
        cells.setdefault((r.metric, r.dataset, r.split, r.method), []).append(r.score)

    tables, dropped = {}, {}
    metrics = sorted({r.metric for r in records}, key=METRICS.index)
    for metric in metrics:
        for task in ("binary", "multiclass"):
            names = sorted({r.dataset for r in records if r.metric == metric and r.task == task})
            if not names:
                continue
            keep = []
            for d in names:
                n_folds = {len(cells.get((metric, d, s, m), [])) for s in ("val", "test")
                           for m in methods}
                if (metric, d) in failed or 0 in n_folds or len(n_folds) != 1:
                    dropped.setdefault((metric, task), []).append(d)
                    log.warning("dropping %s from %s/%s: incomplete results", d, metric, task)
                else:
                    keep.append(d)
            if not keep:
                continue
            for split in (Split.VALIDATION, Split.TEST):
                scores = np.array([[np.mean(cells[(metric, d, split.value, m)]) for m in methods]
                                   for d in keep])
                tables[(metric, task, split.value)] = ScoreTable(keep, list(methods), scores, split)
    return tables, dropped


def run_experiment(config: RunConfig):
    """Returns ``(records, tables, dropped)``."""
    records = collect_records(config)
    tables, dropped = build_tables(records, config.methods)
    return records, tables, dropped


def write_records(records: list[MethodRunRecord], path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            d = asdict(r)
            if not math.isfinite(d["score"]):
                d["score"] = None
            fh.write(json.dumps(d, sort_keys=True) + "\n")


def read_records(path) -> list[MethodRunRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                if d["score"] is None:
                    d["score"] = math.nan
                out.append(MethodRunRecord(**d))
    return out

"""Synthetic base-model predictions with heterogeneous quality and correlated errors."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import PosthocError, PredictionSet, TaskKind, renormalize_rows
from .io import write_meta, write_split


class SpecError(PosthocError):
    pass


@dataclass
class SyntheticSpec:
    n_datasets: int = 30
    n_folds: int = 10
    m_range: tuple[int, int] = (4, 10)
    c_range: tuple[int, int] = (2, 4)
    n_val_range: tuple[int, int] = (80, 200)
    n_test_range: tuple[int, int] = (200, 400)
    signal_range: tuple[float, float] = (0.5, 2.5)
    noise_range: tuple[float, float] = (0.6, 1.6)
    # share of each model's noise variance that is common to all models
    correlation: float = 0.3
    # models 0 and 1 get a strong shared error component with opposite signs
    anticorrelated_pair: bool = False
    zero_noise_models: tuple[int, ...] = ()
    seed: int = 0
    prefix: str = "syn"

    def validate(self):
        for name in ("m_range", "c_range", "n_val_range", "n_test_range",
                     "signal_range", "noise_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise SpecError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
        if self.n_datasets < 1 or not 1 <= self.n_folds <= 10:
            raise SpecError("need n_datasets >= 1 and 1 <= n_folds <= 10")
        if self.m_range[0] < 2:
            raise SpecError("pools need at least 2 models")
        if self.c_range[0] < 2:
            raise SpecError("need at least 2 classes")
        if self.n_val_range[0] < self.c_range[1] or self.n_test_range[0] < self.c_range[1]:
            raise SpecError("splits must be large enough to contain every class")
        if self.signal_range[0] <= 0 or self.noise_range[0] < 0:
            raise SpecError("signal must be positive and noise non-negative")
        if not 0.0 <= self.correlation < 1.0:
            raise SpecError("correlation must lie in [0, 1)")
        if self.anticorrelated_pair and self.m_range[0] < 2:
            raise SpecError("anticorrelated pair needs m >= 2")


@dataclass
class _ModelProfile:
    signal: np.ndarray  # (m,)
    noise: np.ndarray  # (m,)
    bias: np.ndarray  # (m, c) per-class logit offsets
    model_names: list[str] = field(default_factory=list)


def _labels(rng: np.random.Generator, n: int, c: int) -> np.ndarray:
    y = rng.integers(c, size=n)
    y[:c] = np.arange(c)
    rng.shuffle(y)
    return y


def _split(rng, profile: _ModelProfile, n: int, c: int, spec: SyntheticSpec) -> PredictionSet:
    m = profile.signal.size
    y = _labels(rng, n, c)
    own = rng.standard_normal((m, n, c))
    shared = rng.standard_normal((n, c))
    rho = spec.correlation
    eps = np.sqrt(1 - rho) * own + np.sqrt(rho) * shared
    if spec.anticorrelated_pair:
        pair = 2.0 * rng.standard_normal((n, c))
        eps[0] = 0.4 * own[0] + pair
        eps[1] = 0.4 * own[1] - pair
    onehot = np.eye(c)[y]
    logits = (profile.signal[:, None, None] * onehot
              + profile.noise[:, None, None] * eps
              + profile.bias[:, None, :])
    z = np.exp(logits - logits.max(axis=2, keepdims=True))
    probs = renormalize_rows(z / z.sum(axis=2, keepdims=True))
    return PredictionSet(probs, y, tuple(profile.model_names))


def generate_dataset(rng: np.random.Generator, spec: SyntheticSpec, name: str):
    """Returns ``(meta, [(val, test), ...])`` for one dataset."""
    m = int(rng.integers(spec.m_range[0], spec.m_range[1] + 1))
    c = int(rng.integers(spec.c_range[0], spec.c_range[1] + 1))
    signal = rng.uniform(*spec.signal_range, size=m)
    noise = rng.uniform(*spec.noise_range, size=m)
    noise[[b for b in spec.zero_noise_models if b < m]] = 0.0
    bias = 0.3 * rng.standard_normal((m, c))
    bias[[b for b in spec.zero_noise_models if b < m]] = 0.0
    profile = _ModelProfile(signal, noise, bias, [f"model_{b}" for b in range(m)])
    folds = []
    for _ in range(spec.n_folds):
        n_val = int(rng.integers(spec.n_val_range[0], spec.n_val_range[1] + 1))
        n_test = int(rng.integers(spec.n_test_range[0], spec.n_test_range[1] + 1))
        folds.append((_split(rng, profile, n_val, c, spec),
                      _split(rng, profile, n_test, c, spec)))
    meta = {
        "name": name,
        "task_type": TaskKind.for_classes(c).value,
        "n_classes": c,
        "model_names": profile.model_names,
        "n_folds": spec.n_folds,
        "label_map": {f"class_{k}": k for k in range(c)},
    }
    return meta, folds


def generate_synthetic(spec: SyntheticSpec, root) -> list[Path]:
    """Write ``spec.n_datasets`` dataset directories under ``root``."""
    spec.validate()
    root = Path(root)
    seeds = np.random.SeedSequence(spec.seed).spawn(spec.n_datasets)
    out = []
    for d, ss in enumerate(seeds):
        name = f"{spec.prefix}_{d:03d}"
        meta, folds = generate_dataset(np.random.Generator(np.random.PCG64(ss)), spec, name)
        ddir = root / name
        write_meta(ddir, meta)
        label_names = list(meta["label_map"])
        for i, (val, test) in enumerate(folds):
            write_split(ddir / f"fold_{i}" / "val.csv", val, label_names)
            write_split(ddir / f"fold_{i}" / "test.csv", test, label_names)
        out.append(ddir)
    return out

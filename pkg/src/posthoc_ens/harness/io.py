"""On-disk layout of base-model predictions.

    <root>/<dataset>/meta.json
    <root>/<dataset>/fold_<i>/val.csv
    <root>/<dataset>/fold_<i>/test.csv

CSV header is ``instance_id,label,m0_c0,...,m0_c{c-1},m1_c0,...``. Labels are
stored as strings and mapped to class indices through ``label_map``.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..core import FoldData, PosthocError, PredictionSet, TaskKind, validate_prediction_set


class FormatError(PosthocError):
    pass


class MetadataMismatch(PosthocError):
    pass


META_KEYS = ("name", "task_type", "n_classes", "model_names", "n_folds", "label_map")


def fmt_float(x: float) -> str:
    # shortest repr round-trips exactly and never exceeds 17 significant digits
    return repr(float(x))


def read_meta(dataset_dir: Path) -> dict:
    path = Path(dataset_dir) / "meta.json"
    if not path.is_file():
        raise FormatError(f"{path}: missing meta.json")
    try:
        meta = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}:{e.lineno}: {e.msg}") from e
    missing = [k for k in META_KEYS if k not in meta]
    if missing:
        raise FormatError(f"{path}: missing fields {missing}")
    n_classes = meta["n_classes"]
    expected_task = TaskKind.for_classes(n_classes).value
    if meta["task_type"] != expected_task:
        raise MetadataMismatch(f"{path}: task_type {meta['task_type']!r} "
                               f"but n_classes={n_classes}")
    if sorted(meta["label_map"].values()) != list(range(n_classes)):
        raise MetadataMismatch(f"{path}: label_map must map onto 0..{n_classes - 1}")
    return meta


def write_meta(dataset_dir: Path, meta: dict):
    path = Path(dataset_dir) / "meta.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump({k: meta[k] for k in META_KEYS}, fh, indent=2, sort_keys=False)
        fh.write("\n")


def csv_header(n_models: int, n_classes: int) -> list[str]:
    return ["instance_id", "label"] + [f"m{b}_c{k}" for b in range(n_models) for k in range(n_classes)]


def write_split(path: Path, pred_set: PredictionSet, label_names: list[str],
                instance_ids=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    flat = pred_set.probs.transpose(1, 0, 2).reshape(pred_set.n_instances, -1)
    if instance_ids is None:
        instance_ids = range(pred_set.n_instances)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header(pred_set.n_models, pred_set.n_classes))
        for iid, lab, row in zip(instance_ids, pred_set.labels, flat):
            w.writerow([iid, label_names[lab]] + [fmt_float(x) for x in row])


def read_split(path: Path, meta: dict) -> PredictionSet:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"{path}: file not found")
    m = len(meta["model_names"])
    c = meta["n_classes"]
    label_map = meta["label_map"]
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        if header[:2] != ["instance_id", "label"]:
            raise FormatError(f"{path}:1: header must start with instance_id,label")
        if len(header) - 2 != m * c:
            raise MetadataMismatch(
                f"{path}:1: {len(header) - 2} probability columns, meta.json implies "
                f"{m} models x {c} classes = {m * c}")
        if header != csv_header(m, c):
            raise FormatError(f"{path}:1: unexpected column names")
        labels, rows = [], []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
            try:
                labels.append(label_map[rec[1]])
            except KeyError:
                raise FormatError(f"{path}:{lineno}: label {rec[1]!r} not in label_map") from None
            try:
                rows.append([float(x) for x in rec[2:]])
            except ValueError as e:
                raise FormatError(f"{path}:{lineno}: {e}") from None
    if not rows:
        raise FormatError(f"{path}: no instances")
    try:
        return validate_prediction_set(np.array(rows), np.array(labels), m, c,
                                       meta["model_names"], for_ensembling=False)
    except PosthocError as e:
        raise FormatError(f"{path}: {e}") from e


def ingest_dataset(dataset_dir) -> list[FoldData]:
    dataset_dir = Path(dataset_dir)
    meta = read_meta(dataset_dir)
    folds = []
    for i in range(meta["n_folds"]):
        fold_dir = dataset_dir / f"fold_{i}"
        val = read_split(fold_dir / "val.csv", meta)
        test = read_split(fold_dir / "test.csv", meta)
        folds.append(FoldData(meta["name"], i, val, test, dict(meta["label_map"])))
    return folds


def list_datasets(root) -> list[Path]:
    root = Path(root)
    if not root.is_dir():
        raise FormatError(f"{root}: data root is not a directory")
    return sorted(p for p in root.iterdir() if (p / "meta.json").is_file())

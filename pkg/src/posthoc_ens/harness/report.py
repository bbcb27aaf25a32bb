"""Report files: rank tables, normalized improvement, ensemble sizes, CD diagrams."""
from __future__ import annotations

import csv
import json
import platform
import warnings
from collections import defaultdict
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np
import scipy

from .. import __version__
from ..cmaes import RNG_NAME
from ..stats import (PENALTY, DegenerateTable, KOutOfRange, ScoreTable, cd_cliques,
                     friedman_test, mean_ranks, nemenyi_cd, normalized_improvement_table,
                     rank_change_table, significant_pairs)
from .experiment import METHODS
from .io import fmt_float

ALPHA = 0.05
BASELINE = "single-best"


def _group(key) -> str:
    metric, task, *_ = key
    return f"{metric}/{task}"


def _write_csv(path: Path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _num(x) -> str:
    return "" if x is None or (isinstance(x, float) and np.isnan(x)) else fmt_float(x)


def table_statistics(table: ScoreTable) -> dict:
    """Mean ranks plus Friedman/Nemenyi results; statistics are NaN when the
    table is too small for them."""
    n, k = table.scores.shape
    ranks = mean_ranks(table)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            stat, p = friedman_test(table)
    except DegenerateTable:
        stat, p = float("nan"), float("nan")
    try:
        cd = nemenyi_cd(k, n, ALPHA)
    except (KOutOfRange, ValueError):
        cd = float("nan")
    significant = bool(p < ALPHA)
    if significant and np.isfinite(cd):
        pairs = significant_pairs(ranks, cd)
    else:
        pairs = np.zeros((k, k), dtype=bool)
    return dict(ranks=ranks, stat=stat, p=p, cd=cd, significant=significant, pairs=pairs)


def cd_plot_svg(methods, ranks, cd: float, title: str = "") -> str:
    """Minimal critical-difference diagram. Each ``<line class="clique">``
    carries ``data-methods`` naming the methods it joins."""
    k = len(methods)
    ranks = np.asarray(ranks, dtype=np.float64)
    order = np.lexsort((np.arange(k), ranks))
    width, left, right, axis_y = 640, 60, 580, 60
    span = right - left

    def x_of(r):
        return left + (r - 1) / max(k - 1, 1) * span

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
           f'height="{120 + 22 * k}" font-family="sans-serif" font-size="11">']
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="16" text-anchor="middle">{escape(title)}</text>')
    out.append(f'<line class="axis" x1="{left}" y1="{axis_y}" x2="{right}" y2="{axis_y}" stroke="black"/>')
    for r in range(1, k + 1):
        x = x_of(r)
        out.append(f'<line x1="{x:.2f}" y1="{axis_y - 5}" x2="{x:.2f}" y2="{axis_y}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{axis_y - 8}" text-anchor="middle">{r}</text>')
    if np.isfinite(cd):
        out.append(f'<line class="cd" x1="{left:.2f}" y1="30" x2="{left + cd / max(k - 1, 1) * span:.2f}" '
                   f'y2="30" stroke="black" stroke-width="2" data-cd="{fmt_float(cd)}"/>')
        out.append(f'<text x="{left:.2f}" y="26">CD = {cd:.4f}</text>')
    for pos, j in enumerate(order):
        x = x_of(ranks[j])
        y = axis_y + 40 + 22 * pos
        out.append(f'<line class="method" x1="{x:.2f}" y1="{axis_y}" x2="{x:.2f}" y2="{y}" stroke="black"/>')
        anchor, tx = ("end", left - 5) if pos < (k + 1) // 2 else ("start", right + 5)
        out.append(f'<line x1="{x:.2f}" y1="{y}" x2="{tx:.2f}" y2="{y}" stroke="black"/>')
        out.append(f'<text x="{tx:.2f}" y="{y + 4}" text-anchor="{anchor}">'
                   f'{escape(methods[j])} ({ranks[j]:.2f})</text>')
    if np.isfinite(cd):
        for level, (a, b) in enumerate(cd_cliques(ranks, cd)):
            members = [methods[j] for j in order[a:b + 1]]
            y = axis_y + 12 + 6 * level
            out.append(f'<line class="clique" x1="{x_of(ranks[order[a]]) - 3:.2f}" y1="{y}" '
                       f'x2="{x_of(ranks[order[b]]) + 3:.2f}" y2="{y}" stroke="black" '
                       f'stroke-width="3" data-methods="{escape(";".join(members))}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(tables: dict, records, output_dir, config: dict | None = None,
                dropped: dict | None = None) -> list[Path]:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    keys = sorted(tables)

    rank_rows = []
    for key in keys:
        t = tables[key]
        s = table_statistics(t)
        for j, m in enumerate(t.methods):
            diff = [t.methods[i] for i in range(len(t.methods)) if s["pairs"][j, i]]
            rank_rows.append([_group(key), key[2], m, _num(s["ranks"][j]), len(t.datasets),
                              _num(s["stat"]), _num(s["p"]), int(s["significant"]),
                              _num(s["cd"]), ";".join(diff)])
        svg = out / f"cd_plot_{key[0]}_{key[1]}_{key[2]}.svg"
        svg.write_text(cd_plot_svg(t.methods, s["ranks"], s["cd"],
                                   f"{_group(key)} ({key[2]}, {len(t.datasets)} datasets)"),
                       encoding="utf-8")
        written.append(svg)
    path = out / "rank_report.csv"
    _write_csv(path, ["group", "split", "method", "mean_rank", "n_datasets", "friedman_stat",
                      "friedman_p", "friedman_significant", "cd", "significantly_different_from"],
               rank_rows)
    written.append(path)

    change_rows = []
    for metric, task in sorted({k[:2] for k in keys}):
        if (metric, task, "val") in tables and (metric, task, "test") in tables:
            for row in rank_change_table(tables[(metric, task, "val")], tables[(metric, task, "test")]):
                change_rows.append([f"{metric}/{task}", row.method, _num(row.mean_rank_val),
                                    _num(row.mean_rank_test), _num(row.absolute_rank_val),
                                    _num(row.absolute_rank_test)])
    path = out / "rank_change.csv"
    _write_csv(path, ["group", "method", "mean_rank_val", "mean_rank_test",
                      "absolute_rank_val", "absolute_rank_test"], change_rows)
    written.append(path)

    ni_rows = []
    for key in keys:
        t = tables[key]
        if BASELINE not in t.methods:
            continue
        ni = normalized_improvement_table(t, BASELINE)
        outliers = (ni < PENALTY).sum(axis=0)
        for j, m in enumerate(t.methods):
            for i, d in enumerate(t.datasets):
                ni_rows.append([_group(key), key[2], m, d, _num(ni[i, j]), int(outliers[j])])
    path = out / "normalized_improvement.csv"
    _write_csv(path, ["group", "split", "method", "dataset", "value", "n_below_clip"], ni_rows)
    written.append(path)

    sizes = defaultdict(list)
    for r in records:
        if r.split == "test" and r.error is None:
            sizes[(f"{r.metric}/{r.task}", r.method)].append((r.ensemble_size, r.n_models))
    size_rows = []
    for (group, method) in sorted(sizes, key=lambda gm: (gm[0], METHODS.index(gm[1]))):
        a = np.array(sizes[(group, method)], dtype=np.float64)
        size_rows.append([group, method, _num(a[:, 0].mean()), _num(a[:, 1].mean()), len(a)])
    path = out / "ensemble_sizes.csv"
    _write_csv(path, ["group", "method", "mean_ensemble_size", "mean_pool_size", "n_fits"], size_rows)
    written.append(path)

    manifest = {
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "rng": RNG_NAME,
        "config": config,
        "groups": {f"{k[0]}/{k[1]}/{k[2]}": list(tables[k].datasets) for k in keys},
        "dropped": {f"{k[0]}/{k[1]}": v for k, v in sorted((dropped or {}).items())},
        "n_records": len(records),
        "n_failed_records": sum(r.error is not None for r in records),
        "scipy": scipy.__version__,
    }
    path = out / "run_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(path)
    return written

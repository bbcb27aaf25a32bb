"""Command line entry point.

    posthoc-ens gen --out DIR [--n-datasets N ...]
    posthoc-ens fit --dataset DIR --fold I --method M --metric K
    posthoc-ens run --config FILE
    posthoc-ens report --from RECORDS --out DIR

Exit codes: 0 success, 1 configuration or format error, 2 some work items failed
(reports are still written).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..core import MetricKind, PosthocError
from ..metrics import score_of
from .experiment import (METHODS, METRICS, ConfigError, RunConfig, build_tables,
                         derive_seed, fit_method, read_records, run_experiment, write_records)
from .io import ingest_dataset
from .report import emit_report
from .synthetic import SyntheticSpec, generate_synthetic

log = logging.getLogger("posthoc_ens")

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


def _pair(kind):
    def parse(text):
        lo, hi = (kind(v) for v in text.split(","))
        return lo, hi
    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="posthoc-ens", description=__doc__.split("\n\n")[0])
    parser.add_argument("--seed", type=int, default=None, help="global random seed")
    parser.add_argument("--workers", type=int, default=None, help="worker processes")
    parser.add_argument("--verbose", "-v", action="store_true", default=False)
    # the same flags are accepted after the subcommand; SUPPRESS keeps the
    # subparser from overwriting values given before it
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--verbose", "-v", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="write synthetic prediction datasets")
    g.add_argument("--out", required=True, type=Path)
    g.add_argument("--n-datasets", type=int, default=30)
    g.add_argument("--n-folds", type=int, default=10)
    g.add_argument("--m-range", type=_pair(int), default=(4, 10), metavar="LO,HI")
    g.add_argument("--c-range", type=_pair(int), default=(2, 4), metavar="LO,HI")
    g.add_argument("--n-val-range", type=_pair(int), default=(80, 200), metavar="LO,HI")
    g.add_argument("--n-test-range", type=_pair(int), default=(200, 400), metavar="LO,HI")
    g.add_argument("--signal-range", type=_pair(float), default=(0.5, 2.5), metavar="LO,HI")
    g.add_argument("--noise-range", type=_pair(float), default=(0.6, 1.6), metavar="LO,HI")
    g.add_argument("--correlation", type=float, default=0.3)
    g.add_argument("--anticorrelated-pair", action="store_true")

    f = sub.add_parser("fit", parents=[common], help="fit one method on one fold, print JSON")
    f.add_argument("--dataset", required=True, type=Path)
    f.add_argument("--fold", type=int, default=0)
    f.add_argument("--method", required=True, choices=METHODS)
    f.add_argument("--metric", default="roc-auc", choices=METRICS)
    f.add_argument("--n-iters", type=int, default=50)
    f.add_argument("--n-hyp", type=int, default=50)
    f.add_argument("--sigma0", type=float, default=0.2)

    r = sub.add_parser("run", parents=[common], help="run a full experiment from a JSON config")
    r.add_argument("--config", required=True, type=Path)

    rp = sub.add_parser("report", parents=[common], help="re-emit reports from a records file")
    rp.add_argument("--from", dest="records", required=True, type=Path)
    rp.add_argument("--out", type=Path, default=None,
                    help="output directory (default: the records file's directory)")
    return parser


def cmd_gen(args) -> int:
    spec = SyntheticSpec(n_datasets=args.n_datasets, n_folds=args.n_folds,
                         m_range=args.m_range, c_range=args.c_range,
                         n_val_range=args.n_val_range, n_test_range=args.n_test_range,
                         signal_range=args.signal_range, noise_range=args.noise_range,
                         correlation=args.correlation,
                         anticorrelated_pair=args.anticorrelated_pair,
                         seed=args.seed if args.seed is not None else 0)
    dirs = generate_synthetic(spec, args.out)
    log.info("wrote %d datasets to %s", len(dirs), args.out)
    return EXIT_OK


def cmd_fit(args) -> int:
    folds = ingest_dataset(args.dataset)
    if not 0 <= args.fold < len(folds):
        raise ConfigError(f"fold {args.fold} not in 0..{len(folds) - 1}")
    fold = folds[args.fold]
    seed = args.seed if args.seed is not None else 0
    config = RunConfig(str(args.dataset.parent), methods=[args.method], metrics=[args.metric],
                       n_iters=args.n_iters, n_hyp=args.n_hyp, sigma0=args.sigma0, seed=seed)
    metric = MetricKind(args.metric)
    fitted = fit_method(args.method, fold.val, metric, config,
                        derive_seed(seed, fold.dataset_name, fold.fold_id, args.metric, args.method))
    out = {
        "dataset": fold.dataset_name,
        "fold": fold.fold_id,
        "method": args.method,
        "metric": args.metric,
        "model_names": list(fold.val.model_names),
        "weights": None if fitted.weights is None else [float(x) for x in fitted.weights],
        "loss_evals": fitted.loss_evals,
        "ensemble_size": fitted.size,
        "val_score": score_of(metric, fold.val.labels, fitted.predict(metric, fold.val)).value,
        "test_score": score_of(metric, fold.test.labels, fitted.predict(metric, fold.test)).value,
    }
    json.dump(out, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


def cmd_run(args) -> int:
    config = RunConfig.from_json(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.workers is not None:
        config.workers = args.workers
    records, tables, dropped = run_experiment(config)
    out = Path(config.output_dir)
    write_records(records, out / "records.jsonl")
    emit_report(tables, records, out, config.to_dict(), dropped)
    n_failed = sum(r.error is not None for r in records)
    if n_failed:
        log.warning("%d records failed; see records.jsonl", n_failed)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_report(args) -> int:
    records = read_records(args.records)
    tables, dropped = build_tables(records)
    out = args.out if args.out is not None else args.records.parent
    config = None
    manifest = args.records.parent / "run_manifest.json"
    if manifest.is_file():
        config = json.loads(manifest.read_text(encoding="utf-8")).get("config")
    emit_report(tables, records, out, config, dropped)
    return EXIT_PARTIAL if any(r.error is not None for r in records) else EXIT_OK


COMMANDS = {"gen": cmd_gen, "fit": cmd_fit, "run": cmd_run, "report": cmd_report}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # argparse exits with 2 on usage errors; 2 is reserved for partial failures here
        return EXIT_CONFIG if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (PosthocError, OSError) as e:
        log.error("%s", e)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``pupolicy gen-data | run | report``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import trainer
from .config import build_data, load_config, to_config_text, validate_spec
from .errors import ConfigError, NonFiniteError

log = logging.getLogger("pupolicy")

REPORT_METRICS = ("accuracy", "roc_auc", "pr_auc", "assignment_rate")


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def cmd_gen_data(spec, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = build_data(spec)
    data.train.to_csv(out / "train.csv")
    d = data.test.features.shape[1]
    _write_csv(out / "test.csv", [f"feature_{j}" for j in range(d)] + ["y"],
               ([repr(float(v)) for v in row] + [int(y)] for row, y in zip(data.test.features, data.test.y)))
    (out / "manifest.json").write_text(json.dumps(data.manifest, indent=2, sort_keys=True) + "\n")
    (out / "config.ini").write_text(to_config_text(spec))
    return out


def execute_run(spec, run_dir):
    """Train one configuration and write its self-describing run directory."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.ini").write_text(to_config_text(spec))
    data = build_data(spec)
    (run_dir / "manifest.json").write_text(json.dumps(data.manifest, indent=2, sort_keys=True) + "\n")
    result = trainer.run(spec.resolved_train(), data)
    (run_dir / "metrics.csv").write_bytes(result.metrics_csv().encode("utf-8"))
    result.classifier.save(run_dir / "classifier.pupn")
    if result.policy is not None:
        result.policy.save(run_dir / "policy.pupn")
    return run_dir


def expand_grid(spec):
    seeds = spec.grid_seeds or (spec.train.seed,)
    children = []
    for variant in trainer.VARIANTS:
        for seed in seeds:
            child = spec.child(variant, seed)
            validate_spec(child)
            children.append((f"{variant}_seed{seed}", child))
    return children


def _run_child(args):
    spec, run_dir = args
    execute_run(spec, run_dir)
    return str(run_dir)


def cmd_run(spec, out_dir, grid=False, jobs=1):
    out = Path(out_dir)
    if not grid:
        return [execute_run(spec, out)]
    tasks = [(child, out / name) for name, child in expand_grid(spec)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_run_child, tasks))
    else:
        done = [_run_child(t) for t in tasks]
    return [Path(d) for d in done]


def _find_runs(paths):
    runs = []
    for p in map(Path, paths):
        if (p / "metrics.csv").exists():
            runs.append(p)
        else:
            runs.extend(sorted(c.parent for c in p.glob("*/metrics.csv")))
    return runs


def _read_metrics(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _num(text):
    return float(text) if text not in ("", None) else math.nan


def cmd_report(paths, out_dir):
    runs = _find_runs(paths)
    if not runs:
        raise ConfigError("no completed runs (metrics.csv) found")
    specs = [load_config(r / "config.ini") for r in runs]
    ref = specs[0]
    for r, s in zip(runs[1:], specs[1:]):
        if s.dataset != ref.dataset or s.train.epochs != ref.train.epochs:
            raise ConfigError(
                f"run {r} is incompatible with {runs[0]}: dataset block or epoch count differ; "
                "report runs of one experiment at a time"
            )
    by_variant = {}
    for r in runs:
        rows = _read_metrics(r / "metrics.csv")
        by_variant.setdefault(rows[-1]["variant"], []).append(rows)

    header = ["variant", "n_runs", "epoch"]
    for m in REPORT_METRICS:
        header += [f"{m}_mean", f"{m}_std"]
    summary, curves = [], []
    for variant in sorted(by_variant):
        histories = by_variant[variant]
        finals = [h[-1] for h in histories]
        row = [variant, len(histories), finals[0]["epoch"]]
        for m in REPORT_METRICS:
            vals = [_num(f[m]) for f in finals]
            vals = [v for v in vals if not math.isnan(v)]
            mean = repr(float(np.mean(vals))) if vals else ""
            std = repr(statistics.stdev(vals)) if len(vals) > 1 else ""
            row += [mean, std]
        summary.append(row)
        epochs = sorted({int(r["epoch"]) for h in histories for r in h})
        for epoch in epochs:
            for m in REPORT_METRICS:
                vals = [_num(r[m]) for h in histories for r in h if int(r["epoch"]) == epoch]
                vals = [v for v in vals if not math.isnan(v)]
                if vals:
                    curves.append([epoch, variant, m, repr(float(np.mean(vals)))])
    curves.sort(key=lambda c: (c[1], c[0], c[2]))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "summary.csv", header, summary)
    _write_csv(out / "curves.csv", ["epoch", "variant", "metric", "value"], curves)
    return out


def build_parser():
    parser = argparse.ArgumentParser(prog="pupolicy", description="PU learning with a label-assignment policy")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="write the PU training set, test set and split manifest")
    gen.add_argument("--config", required=True)
    gen.add_argument("--out")
    gen.add_argument("--seed", type=int, help="override dataset split seed")

    run = sub.add_parser("run", help="train one configuration (or a variant x seed grid)")
    run.add_argument("--config", required=True)
    run.add_argument("--out")
    run.add_argument("--seed", type=int, help="override the run seed")
    run.add_argument("--grid", action="store_true", help="run every variant for each of train.grid_seeds")
    run.add_argument("--jobs", type=int, default=1)

    rep = sub.add_parser("report", help="aggregate finished runs into summary and curve tables")
    rep.add_argument("runs", nargs="+")
    rep.add_argument("--out", required=True)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    try:
        if args.command == "report":
            out = cmd_report(args.runs, args.out)
            log.info("wrote %s", out)
            return 0
        spec = load_config(args.config)
        if args.command == "gen-data":
            if args.seed is not None:
                spec.dataset.split_seed = args.seed
            out = cmd_gen_data(spec, args.out or spec.out_dir)
        else:
            if args.seed is not None:
                spec.train.seed = args.seed
            runs = cmd_run(spec, args.out or spec.out_dir, grid=args.grid, jobs=args.jobs)
            out = ", ".join(str(r) for r in runs)
        log.info("wrote %s", out)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return 1
    except NonFiniteError as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

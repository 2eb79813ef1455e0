"""Command-line experiment runner.

    loopgap run [EXPERIMENT] [--config PATH] [--seed N] [--threads N] [--out DIR]
    loopgap validate --config PATH
    loopgap list-experiments

A run writes report.jsonl (machine-readable, first record is the fully
resolved config) and summary.txt, plus any experiment CSV dumps, into the
output directory.  Reports contain no timestamps: identical config + seed
reproduces identical bytes.  Exit codes: 0 success, 2 validation failure,
3 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import EXPERIMENTS, ExperimentConfig, default_config, load_config, validate_config
from .engine import EngineError
from .experiments import ExperimentReport, run_experiment
from .paths import ValidationError

__all__ = ["main"]

_EXPERIMENT_BLURBS = {
    "tsirelson-gap": "closed-loop value surrogate vs open-loop probe-family envelope",
    "uniformity": "KS tests of fractional increment quotients against Uniform[0,1)",
    "recursion-check": "interval recursion vs the drift, plus prefix consistency",
    "girsanov-check": "reweighted vs direct values; projection refinement of weights",
    "qv-recovery": "noise recovery round trips and realized-variance estimation",
    "hjb-benchmark": "PDE solver against closed-form and degenerate oracles",
    "equivalence-triangle": "PDE value, feedback MC, and open-loop envelope vs the Gaussian oracle",
}


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="loopgap", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="run one experiment")
    runp.add_argument("experiment", nargs="?", choices=EXPERIMENTS,
                      help="experiment name (overrides the config's experiment)")
    runp.add_argument("--config", type=Path, help="TOML config file")
    runp.add_argument("--seed", type=int, help="override mc.master_seed")
    runp.add_argument("--threads", type=int, default=1, help="worker thread cap")
    runp.add_argument("--out", type=Path, help="override the output directory")

    valp = sub.add_parser("validate", help="check a config without running")
    valp.add_argument("--config", type=Path, required=True)

    sub.add_parser("list-experiments", help="list experiment names")
    return p


def _resolve_config(args) -> tuple[ExperimentConfig, list[str]]:
    if args.config is not None:
        cfg, diags = load_config(args.config)
        if args.experiment:
            cfg = replace(cfg, experiment=args.experiment)
            diags = [d for d in diags if not d.startswith("experiment:")]
            diags.extend(validate_config(cfg))
    elif args.experiment:
        cfg, diags = default_config(args.experiment), []
    else:
        raise ValidationError("run needs an experiment name or --config")
    if args.seed is not None:
        cfg = replace(cfg, mc=replace(cfg.mc, master_seed=args.seed))
    if args.out is not None:
        cfg = replace(cfg, out_dir=str(args.out))
    return cfg, diags


def _json_default(obj):
    # numpy scalars slip into records; serialize them by exact value
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    raise TypeError(f"not JSON-serializable: {obj!r}")


def _write_report(cfg: ExperimentConfig, report: ExperimentReport) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    head = {
        "record": "config",
        "schema_version": cfg.schema_version,
        "experiment": cfg.experiment,
        "resolved": cfg.to_dict(),
    }
    with open(out / "report.jsonl", "w", newline="\n") as fh:
        for rec in [head, *report.records]:
            fh.write(json.dumps(rec, sort_keys=True, default=_json_default) + "\n")

    with open(out / "summary.txt", "w", newline="\n") as fh:
        fh.write(f"experiment: {cfg.experiment}\n")
        fh.write(f"seed: {cfg.mc.master_seed}\n")
        for line in report.summary:
            fh.write(line + "\n")

    for name, (header, rows) in report.csv_files.items():
        with open(out / name, "w", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(str(c) for c in row) + "\n")
    return out


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "list-experiments":
        for name in EXPERIMENTS:
            print(f"{name:22s} {_EXPERIMENT_BLURBS[name]}")
        return 0

    if args.command == "validate":
        try:
            _, diags = load_config(args.config)
        except (ValidationError, OSError) as e:
            print(f"error: {e}", file=sys.stderr)
            return 2
        if diags:
            for d in diags:
                print(f"invalid: {d}", file=sys.stderr)
            return 2
        print("config OK")
        return 0

    # run
    try:
        cfg, diags = _resolve_config(args)
    except (ValidationError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    if diags:
        for d in diags:
            print(f"invalid: {d}", file=sys.stderr)
        return 2

    try:
        report = run_experiment(cfg, threads=max(1, args.threads))
    except ValidationError as e:
        print(f"validation failure: {e}", file=sys.stderr)
        return 2
    except EngineError as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return 3

    try:
        out = _write_report(cfg, report)
    except OSError as e:
        print(f"error: cannot write report: {e}", file=sys.stderr)
        return 2

    print(f"[{cfg.experiment}] seed {cfg.mc.master_seed}")
    for line in report.summary:
        print(line)
    print(f"report written to {out}/report.jsonl")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``himo run|validate|export|prop-check``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor

from ..analysis.proposition import run_proposition_suite
from .config import ConfigError, default_config, load_config, validate_config
from .export import export_curves
from .runner import run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _load(args):
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = default_config(args.experiment or "portal_ac")
    if getattr(args, "experiment", None) and args.config and args.experiment != cfg.experiment:
        raise ConfigError("experiment", f"--experiment {args.experiment} conflicts with the config file")
    if getattr(args, "out", None):
        cfg = dataclasses.replace(cfg, out_dir=args.out)
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seeds=(args.seed,))
    return cfg


def _report_problems(cfg) -> bool:
    errors, warnings = validate_config(cfg)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    return not errors


def _run_seed(cfg, seed):
    return run_experiment(cfg, seeds=(seed,))


def cmd_run(args) -> int:
    cfg = _load(args)
    if not _report_problems(cfg):
        return EXIT_CONFIG
    if args.parallel_seeds > 1 and args.resume is None:
        with ProcessPoolExecutor(max_workers=args.parallel_seeds) as pool:
            reports = [r for rs in pool.map(_run_seed, [cfg] * len(cfg.seeds), cfg.seeds) for r in rs]
    else:
        reports = run_experiment(cfg, resume=args.resume)
    for r in reports:
        print(json.dumps(r, sort_keys=True))
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _load(args)
    ok = _report_problems(cfg)
    if ok:
        print(f"ok: {cfg.experiment} config_hash={cfg.config_hash()}")
    return EXIT_OK if ok else EXIT_CONFIG


def cmd_export(args) -> int:
    for p in export_curves(args.out, args.dest):
        print(p)
    return EXIT_OK


def cmd_prop_check(args) -> int:
    res = run_proposition_suite(args.instances, args.seed)
    print(json.dumps(res, sort_keys=True))
    return EXIT_OK if not res["counterexamples"] else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="himo", description="Hindsight modelling experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train and write traces, checkpoints and reports")
    run.add_argument("--config", help="key = value config file")
    run.add_argument("--experiment", help="use this experiment's defaults when no config is given")
    run.add_argument("--seed", type=int, help="run only this seed")
    run.add_argument("--out", help="output directory (overrides out_dir)")
    run.add_argument("--resume", help="checkpoint (.json) to continue from")
    run.add_argument("--parallel-seeds", type=int, default=1,
                     help="run seeds in this many worker processes")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="check a config and print errors and warnings")
    val.add_argument("--config", help="key = value config file")
    val.add_argument("--experiment")
    val.set_defaults(func=cmd_validate)

    exp = sub.add_parser("export", help="aggregate traces across seeds")
    exp.add_argument("--out", required=True, help="output directory of the runs")
    exp.add_argument("--dest", help="where to write curves (default: --out)")
    exp.set_defaults(func=cmd_export)

    prop = sub.add_parser("prop-check", help="check the model-error bound on random instances")
    prop.add_argument("--instances", type=int, default=1000)
    prop.add_argument("--seed", type=int, default=0)
    prop.set_defaults(func=cmd_prop_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception:  # noqa: BLE001 - any failure past config parsing is a runtime failure
        traceback.print_exc()
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Run orchestration: metric traces, checkpoints, resume and reports.

Layout under ``out_dir``::

    <experiment>/<arm>/seed_<s>/trace.csv
    <experiment>/<arm>/seed_<s>/ckpt/step_<n>.json|.bin
    <experiment>/<arm>/seed_<s>/report.json
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from pathlib import Path

import numpy as np

from .. import __version__
from ..analysis.counting import (
    bootstrap_contrast,
    counting_experiment,
    designed_samples,
    estimate_mse,
    factored_estimate,
    joint_estimate,
    nstep_targets_from_start,
)
from ..analysis.proposition import proposition_check, random_instance
from ..checkpoint import load_arrays, save_arrays
from ..envs.chain import ChainInstance
from .config import ExperimentConfig, validate_config
from .runs import RUNS

TRACE_COLUMNS = ("step", "episode_return_mean", "L_v", "L_vplus", "L_model", "value_error_vm",
                 "value_error_vplus", "grad_norm", "epsilon", "seed")


def _fmt(v) -> str:
    if v is None:
        return "nan"
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return repr(v)


def run_dir(cfg: ExperimentConfig, arm: str, seed: int) -> Path:
    return Path(cfg.out_dir) / cfg.experiment / arm / f"seed_{seed}"


def _header_comment(cfg: ExperimentConfig, arm: str) -> str:
    return (f"# config_hash={cfg.config_hash()} version={__version__} "
            f"experiment={cfg.experiment} arm={arm}\n")


def _rng_states(run) -> dict:
    return {name: g.bit_generator.state for name, g in run.rngs().items()}


def _set_rng_states(run, states: dict) -> None:
    for name, g in run.rngs().items():
        g.bit_generator.state = states[name]


def save_checkpoint(path: Path, run, cfg: ExperimentConfig, arm: str, seed: int, step: int) -> Path:
    meta = {"step": step, "arm": arm, "seed": seed, "experiment": cfg.experiment,
            "config_hash": cfg.config_hash(), "version": __version__,
            "rng": _rng_states(run), "config": {k: list(v) if isinstance(v, tuple) else v
                                                for k, v in cfg.to_dict().items()}}
    return save_arrays(path, run.state_arrays(), meta)


class TrainingRunner:
    """Drives one (arm, seed) training run, writing its trace and checkpoints."""

    def __init__(self, cfg: ExperimentConfig, arm: str, seed: int):
        self.cfg, self.arm, self.seed = cfg, arm, seed
        self.run = RUNS[cfg.experiment](cfg, arm, seed)
        self.dir = run_dir(cfg, arm, seed)
        self.columns = TRACE_COLUMNS + tuple(c for c in self.run.extra_columns
                                             if c not in TRACE_COLUMNS)
        self.step = 0

    def _ckpt_path(self, step: int) -> Path:
        return self.dir / "ckpt" / f"step_{step:08d}"

    def _write_header(self) -> None:
        self.dir.mkdir(parents=True, exist_ok=True)
        with open(self.dir / "trace.csv", "w", newline="", encoding="utf-8") as fh:
            fh.write(_header_comment(self.cfg, self.arm))
            fh.write(",".join(self.columns) + "\n")

    def _append_row(self, row: dict) -> None:
        with open(self.dir / "trace.csv", "a", newline="", encoding="utf-8") as fh:
            fh.write(",".join(_fmt(row.get(c)) for c in self.columns) + "\n")

    def resume_from(self, ckpt) -> None:
        arrays, meta = load_arrays(ckpt)
        if meta.get("config_hash") != self.cfg.config_hash():
            raise ValueError("checkpoint was written with a different config")
        step = int(meta["step"])
        self.run.load_state_arrays(arrays, step)
        _set_rng_states(self.run, meta["rng"])
        self.step = step
        # drop trace rows written after the checkpoint
        trace = self.dir / "trace.csv"
        lines = trace.read_text(encoding="utf-8").splitlines(keepends=True)
        keep = lines[:2] + [ln for ln in lines[2:] if int(ln.split(",", 1)[0]) <= step]
        trace.write_text("".join(keep), encoding="utf-8")

    def train(self, resume=None) -> dict:
        cfg = self.cfg
        if resume is None:
            self._write_header()
            save_checkpoint(self._ckpt_path(0), self.run, cfg, self.arm, self.seed, 0)
        else:
            self.resume_from(resume)
        acc: dict[str, list] = {}
        while self.step < cfg.total_steps:
            stats = self.run.train_step()
            for k, v in stats.items():
                acc.setdefault(k, []).append(v)
            self.step += 1
            if self.step % cfg.eval_interval == 0 or self.step == cfg.total_steps:
                row = {k: float(np.mean(v)) for k, v in acc.items()}
                row.update(self.run.log_metrics(self.step))
                row["step"], row["seed"] = self.step, self.seed
                self._append_row(row)
                acc = {}
                if self.step % cfg.checkpoint_interval == 0 or self.step == cfg.total_steps:
                    save_checkpoint(self._ckpt_path(self.step), self.run, cfg, self.arm,
                                    self.seed, self.step)
        report = {"experiment": cfg.experiment, "arm": self.arm, "seed": self.seed,
                  "steps": self.step, "config_hash": cfg.config_hash(), **self.run.report()}
        (self.dir / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True))
        return report


# ---------------------------------------------------------------- one-shot experiments


def run_chain(cfg: ExperimentConfig, seed: int) -> dict:
    out = run_dir(cfg, "himo", seed)
    out.mkdir(parents=True, exist_ok=True)
    inst = ChainInstance.sample(seed, cfg.chain_n, cfg.chain_m)
    rows = counting_experiment(inst, cfg.chain_budgets, trials=cfg.chain_trials, seed=seed)
    with open(out / "counting.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write(_header_comment(cfg, "himo"))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["budget", "joint_mse", "factored_mse", "joint_coverage", "factored_coverage"])
        for r in rows:
            w.writerow([r.budget] + [_fmt(x) for x in (r.joint_mse, r.factored_mse,
                                                       r.joint_coverage, r.factored_coverage)])
    designed = designed_samples(inst)
    contrast = bootstrap_contrast(inst, trials=cfg.chain_trials, seed=seed)
    targets = [nstep_targets_from_start(inst, x, xp) for x in range(inst.n) for xp in range(inst.m)]
    report = {
        "experiment": "chain", "seed": seed, "n": inst.n, "m": inst.m,
        "joint_cells": inst.joint_cells, "factored_cells": inst.factored_cells,
        "designed_budget": len(designed),
        "designed_factored_mse": estimate_mse(inst, factored_estimate(inst, designed)),
        "designed_joint_mse": estimate_mse(inst, joint_estimate(inst, designed)),
        "random_joint_median": contrast["joint_median"],
        "random_factored_median": contrast["factored_median"],
        "nstep_targets_equal": all(t[0] == t[1] for t in targets),
        "config_hash": cfg.config_hash(),
    }
    (out / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True))
    return report


def run_proposition(cfg: ExperimentConfig, seed: int) -> dict:
    out = run_dir(cfg, "himo", seed)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["instance", "C", "L_v", "L_vplus", "L_vm", "L_model", "omega2_norm_sq", "threshold",
            "premise_holds", "conclusion_holds", "degenerate"]
    w.writerow(cols)
    premise = held = 0
    counterexamples = []
    for i in range(cfg.prop_instances):
        rep = proposition_check(random_instance(rng))
        d = rep.to_dict()
        w.writerow([i] + [_fmt(d[c]) for c in cols[1:]])
        if rep.premise_holds:
            premise += 1
            held += rep.conclusion_holds
            if not rep.conclusion_holds:
                counterexamples.append(i)
    (out / "proposition.csv").write_text(_header_comment(cfg, "himo") + buf.getvalue(),
                                         encoding="utf-8")
    report = {"experiment": "proposition", "seed": seed, "instances": cfg.prop_instances,
              "premise_holds": premise, "conclusion_holds": held,
              "counterexamples": counterexamples, "config_hash": cfg.config_hash()}
    (out / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True))
    return report


def run_one(cfg: ExperimentConfig, arm: str, seed: int, resume=None) -> dict:
    if cfg.experiment == "chain":
        return run_chain(cfg, seed)
    if cfg.experiment == "proposition":
        return run_proposition(cfg, seed)
    return TrainingRunner(cfg, arm, seed).train(resume)


def run_experiment(cfg: ExperimentConfig, seeds=None, resume=None) -> list[dict]:
    """Runs every (arm, seed) pair, or only the run a checkpoint belongs to."""
    errors, _ = validate_config(cfg)
    if errors:
        raise ValueError("; ".join(errors))
    if resume is not None:
        _, meta = load_arrays(resume)
        return [run_one(cfg, meta["arm"], int(meta["seed"]), resume)]
    seeds = cfg.seeds if seeds is None else seeds
    return [run_one(cfg, arm, s) for s in seeds for arm in cfg.arms]


def config_for_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    return dataclasses.replace(cfg, seeds=(seed,))

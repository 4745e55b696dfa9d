"""Aggregate metric traces across seeds into one tidy CSV per experiment arm."""
from __future__ import annotations

import csv
import math
import warnings
from pathlib import Path

import numpy as np

STATS = ("mean", "median", "min", "max")


def read_trace(path) -> tuple[list[str], list[dict]]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    return list(reader.fieldnames or []), list(reader)


def _num(x: str) -> float:
    try:
        return float(x)
    except (TypeError, ValueError):
        return math.nan


def aggregate(traces: list[list[dict]], columns: list[str]) -> list[dict]:
    """Per-step statistics over runs; steps missing from any run are dropped."""
    steps = [{int(r["step"]) for r in t} for t in traces]
    common = sorted(set.intersection(*steps)) if steps else []
    if any(len(s) != len(common) for s in steps):
        warnings.warn("step grids differ across runs; keeping the steps common to all",
                      stacklevel=2)
    by_step = [{int(r["step"]): r for r in t} for t in traces]
    out = []
    for step in common:
        row = {"step": step, "n_runs": len(traces)}
        for col in columns:
            if col in ("step", "seed"):
                continue
            vals = np.array([_num(t[step].get(col)) for t in by_step])
            vals = vals[~np.isnan(vals)]
            for stat in STATS:
                row[f"{col}_{stat}"] = getattr(np, stat)(vals) if len(vals) else math.nan
        out.append(row)
    return out


def export_curves(output_dir, dest=None) -> list[Path]:
    """Writes ``curves_<experiment>_<arm>.csv`` for every arm with traces."""
    root = Path(output_dir)
    dest = Path(dest) if dest is not None else root
    groups: dict[tuple[str, str], list[Path]] = {}
    for trace in sorted(root.glob("*/*/*/trace.csv")):
        experiment, arm = trace.parts[-4], trace.parts[-3]
        groups.setdefault((experiment, arm), []).append(trace)
    if not groups:
        raise FileNotFoundError(f"no completed runs under {root}")
    written = []
    dest.mkdir(parents=True, exist_ok=True)
    for (experiment, arm), paths in groups.items():
        columns = None
        traces = []
        for p in paths:
            cols, rows = read_trace(p)
            columns = columns or cols
            traces.append(rows)
        rows = aggregate(traces, columns)
        path = dest / f"curves_{experiment}_{arm}.csv"
        fields = ["step", "n_runs"] + [f"{c}_{s}" for c in columns if c not in ("step", "seed")
                                       for s in STATS]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(fields)
            for r in rows:
                w.writerow([r["step"], r["n_runs"]] + [repr(float(r[f])) for f in fields[2:]])
        written.append(path)
    return written

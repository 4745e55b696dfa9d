"""Checkpoint files: a JSON manifest next to a raw float64 payload.

``<stem>.json`` lists every array as ``{name, partition, shape, offset,
count}``; offsets and counts are in float64 elements into ``<stem>.bin``,
which holds the little-endian values back to back. Arbitrary JSON metadata
(net config, seed, step, rng state, config hash) rides in the manifest.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT = "himo-ckpt-1"


def _stem(path) -> Path:
    path = Path(path)
    return path.with_suffix("") if path.suffix in (".json", ".bin") else path


def save_arrays(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> Path:
    stem = _stem(path)
    stem.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    offset = 0
    chunks = []
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({
            "name": name,
            "partition": name.split("/", 1)[0],
            "shape": list(a.shape),
            "offset": offset,
            "count": int(a.size),
        })
        chunks.append(a.reshape(-1).tobytes())
        offset += a.size
    bin_path = stem.with_suffix(".bin")
    bin_path.write_bytes(b"".join(chunks))
    manifest = {
        "format": FORMAT,
        "dtype": "float64",
        "byteorder": "little",
        "payload": bin_path.name,
        "entries": entries,
        "meta": meta or {},
    }
    json_path = stem.with_suffix(".json")
    json_path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return json_path


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    stem = _stem(path)
    manifest = json.loads(stem.with_suffix(".json").read_text())
    if manifest.get("format") != FORMAT:
        raise ValueError(f"not a {FORMAT} checkpoint: {stem}")
    payload = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype="<f8")
    arrays = {}
    for e in manifest["entries"]:
        chunk = payload[e["offset"]:e["offset"] + e["count"]]
        arrays[e["name"]] = np.array(chunk, dtype=np.float64).reshape(e["shape"])
    return arrays, manifest["meta"]


def save_params(path, params) -> Path:
    """Save a :class:`~himo.nets.HimoParams` bundle with its config and seed."""
    return save_arrays(path, params.named_arrays(),
                       {"net_config": params.config.to_dict(), "seed": params.seed})


def load_params(path):
    from .nets import NetConfig, init_params

    arrays, meta = load_arrays(path)
    params = init_params(NetConfig(**meta["net_config"]), meta["seed"])
    params.load_arrays(arrays)
    return params

"""Checkpoint I/O: raw little-endian f64 payload plus a JSON manifest."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

PAYLOAD = "params.bin"
MANIFEST = "manifest.json"


class CheckpointError(ValueError):
    pass


def save_checkpoint(directory, named_params, metadata: dict | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries, offset = [], 0
    chunks = []
    for name, p in named_params:
        raw = np.ascontiguousarray(p.data, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(p.data.shape), "offset": offset})
        offset += len(raw)
        chunks.append(raw)
    manifest = dict(metadata or {})
    manifest["parameters"] = entries
    _atomic_write(directory / PAYLOAD, b"".join(chunks))
    _atomic_write(directory / MANIFEST,
                  (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())
    return directory


def load_manifest(directory) -> dict:
    path = Path(directory) / MANIFEST
    if not path.exists():
        raise CheckpointError(f"no checkpoint manifest at {path}")
    return json.loads(path.read_text())


def load_checkpoint(directory, named_params) -> dict:
    """Copy stored values into ``named_params`` in place; returns the manifest."""
    manifest = load_manifest(directory)
    payload = (Path(directory) / PAYLOAD).read_bytes()
    stored = {e["name"]: e for e in manifest["parameters"]}
    named_params = list(named_params)
    if set(stored) != {n for n, _ in named_params}:
        raise CheckpointError("checkpoint parameter names do not match the model")
    for name, p in named_params:
        entry = stored[name]
        if tuple(entry["shape"]) != p.data.shape:
            raise CheckpointError(f"{name}: stored shape {entry['shape']} != {list(p.data.shape)}")
        count = int(np.prod(entry["shape"], dtype=np.int64))
        values = np.frombuffer(payload, dtype="<f8", count=count, offset=entry["offset"])
        p.data[...] = values.reshape(p.data.shape)
    return manifest


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)

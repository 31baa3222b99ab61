"""Stage helpers shared by the CLI, the demos and the acceptance suite."""

from __future__ import annotations

import hashlib
import json
import multiprocessing
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .data_io import TrackSet, window_samples
from .dataset import build_samples, collate, constant_velocity, sample_id
from .lane_geometry import LaneMap
from .metrics import MissRateThresholds, ade, fde, is_miss, min_over_modes
from .model import HybridModel, integrate_trajectory
from .raster import rasterize
from .scene_graph import build_scene_graph
from .synth import generate_mixed

TOTAL = "total"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write(path, data) -> None:
    """Write to a sibling temp file, then rename over the target."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_bytes(data.encode() if isinstance(data, str) else data)
    os.replace(tmp, path)


def write_json(path, obj) -> None:
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


# process-pool plumbing: workers are forked after the shared inputs are set
_SHARED: dict = {}


def _call(args):
    fn, item = args
    return fn(item)


def parallel_map(fn, items, jobs: int = 1, **shared) -> list:
    """Order-preserving map; ``shared`` is visible to ``fn`` through ``shared_input``."""
    items = list(items)
    _SHARED.clear()
    _SHARED.update(shared)
    try:
        if jobs <= 1 or len(items) < 2:
            return [fn(it) for it in items]
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
            chunk = max(1, len(items) // (4 * jobs))
            return list(pool.map(_call, [(fn, it) for it in items], chunksize=chunk))
    finally:
        _SHARED.clear()


def shared_input(name: str):
    return _SHARED[name]


def _graph_job(frame):
    return build_scene_graph(shared_input("map"), shared_input("tracks").states_at(frame), t=frame)


def _raster_job(window):
    img = rasterize(shared_input("map"), shared_input("tracks"), window, shared_input("raster"))
    return img.pixels.transpose(2, 0, 1).copy()


def all_frames(tracks: TrackSet) -> list:
    return sorted({int(f) for t in tracks for f in t.frames})


def compute_graphs(lane_map: LaneMap, tracks: TrackSet, frames=None, jobs: int = 1) -> list:
    frames = all_frames(tracks) if frames is None else list(frames)
    return parallel_map(_graph_job, frames, jobs, map=lane_map, tracks=tracks)


def render_rasters(lane_map: LaneMap, tracks: TrackSet, windows, raster_config, jobs: int = 1) -> dict:
    windows = list(windows)
    images = parallel_map(_raster_job, windows, jobs, map=lane_map, tracks=tracks,
                          raster=raster_config)
    return {sample_id(w): img for w, img in zip(windows, images)}


def synthesize(cfg: PipelineConfig):
    d = cfg.data
    return generate_mixed(list(d.families), d.episodes_for(), seed=d.seed,
                          speed_range=tuple(d.speed_range), gap_range=tuple(d.gap_range),
                          curve_radius_range=tuple(d.curve_radius_range), duration_s=d.duration_s)


def windows_for(tracks: TrackSet, cfg: PipelineConfig) -> list:
    return window_samples(tracks, cfg.data.history_len, cfg.data.future_len, cfg.data.stride)


def prepare_samples(lane_map: LaneMap, tracks: TrackSet, cfg: PipelineConfig, family_of=None,
                    graphs=None, images=None, jobs: int = 1) -> list:
    """Samples for every window; missing graphs and rasters are computed (in parallel)."""
    windows = windows_for(tracks, cfg)
    if graphs is None:
        frames = sorted({f for w in windows for f in range(w.first_frame, w.t0 + 1)})
        graphs = compute_graphs(lane_map, tracks, frames, jobs)
    if images is None:
        images = render_rasters(lane_map, tracks, windows, cfg.raster, jobs)
    return build_samples(lane_map, tracks, cfg.raster, cfg.data.history_len, cfg.data.future_len,
                         cfg.data.stride, family_of, windows, graphs=graphs, images=images)


def predict_positions(model: HybridModel, samples, alpha=None, batch_size: int = 64):
    """World positions (K, F, 2) per sample plus the attention values used."""
    positions, alpha_g = [], []
    for i in range(0, len(samples), batch_size):
        chunk = samples[i:i + batch_size]
        out = model.forward(collate(chunk), alpha)
        for s, pred, ag in zip(chunk, out["pred"].data, out["alpha_g"].data[:, 0]):
            positions.append(np.array([integrate_trajectory(p, s.start_pose) for p in pred]))
            alpha_g.append(float(ag))
    return positions, np.array(alpha_g)


def cv_positions(samples) -> list:
    return [integrate_trajectory(constant_velocity(s), s.start_pose)[None] for s in samples]


def metric_rows(samples, predictions, thresholds: MissRateThresholds, label: str) -> list:
    """Per-location and total ADE/FDE/MR rows (min over modes)."""
    groups = defaultdict(list)
    for s, p in zip(samples, predictions):
        per = (min_over_modes(ade, p, s.truth_positions), min_over_modes(fde, p, s.truth_positions),
               float(is_miss(p, s.truth_positions, s.final_speed, s.final_heading, thresholds)))
        groups[s.family or "all"].append(per)
        if s.family:
            groups[TOTAL].append(per)
    if TOTAL not in groups:
        groups[TOTAL] = groups.pop("all", [])
    rows = []
    for loc in sorted(k for k in groups if k != TOTAL) + [TOTAL]:
        vals = np.array(groups[loc])
        if len(vals) == 0:
            continue
        rows.append({"location": loc, "model": label, "n": len(vals), "ade": float(vals[:, 0].mean()),
                     "fde": float(vals[:, 1].mean()), "mr": float(vals[:, 2].mean())})
    return rows

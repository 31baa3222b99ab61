"""Assemble model-ready samples (graph history, raster, targets) and batch them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_io import FRAME_PERIOD, SampleWindow, TrackSet, window_samples
from .lane_geometry import LaneMap
from .raster import RasterConfig, rasterize
from .scene_graph import EDGE_WIDTH, NODE_WIDTH, SceneGraph, build_scene_graph


@dataclass
class Sample:
    sample_id: str
    window: SampleWindow
    graphs: list              # history SceneGraphs, oldest first, ending at t0
    image: np.ndarray         # (3, R, R) uint8
    truth_velocity: np.ndarray  # (2F,) interleaved (vx, vy) in the ego frame at t0
    truth_positions: np.ndarray  # (F, 2) world frame
    start_pose: tuple         # (x, y, heading) at t0
    final_speed: float
    final_heading: float
    last_velocity: np.ndarray  # (2,) ego-frame velocity at t0
    family: str | None = None


def sample_id(window: SampleWindow) -> str:
    return f"{window.ego_id}@{window.t0}"


def world_to_ego(vectors: np.ndarray, heading: float) -> np.ndarray:
    c, s = np.cos(heading), np.sin(heading)
    return np.stack([c * vectors[..., 0] + s * vectors[..., 1],
                     -s * vectors[..., 0] + c * vectors[..., 1]], axis=-1)


class GraphCache:
    """Memoizes one SceneGraph per frame."""

    def __init__(self, lane_map: LaneMap, tracks: TrackSet):
        self.lane_map = lane_map
        self.tracks = tracks
        self._graphs: dict = {}

    def __call__(self, frame: int) -> SceneGraph:
        g = self._graphs.get(frame)
        if g is None:
            g = build_scene_graph(self.lane_map, self.tracks.states_at(frame), t=frame)
            self._graphs[frame] = g
        return g

    def graphs(self) -> list:
        return [self._graphs[f] for f in sorted(self._graphs)]


def build_sample(lane_map: LaneMap, tracks: TrackSet, window: SampleWindow,
                 raster_config: RasterConfig, graphs: GraphCache | None = None,
                 family: str | None = None, image: np.ndarray | None = None) -> Sample:
    """``image`` (3, R, R) uint8 skips rendering when a cached raster exists."""
    graphs = graphs or GraphCache(lane_map, tracks)
    track = tracks[window.ego_id]
    t0 = window.t0
    history = [graphs(f) for f in range(window.first_frame, t0 + 1)]
    if image is None:
        image = rasterize(lane_map, tracks, window, raster_config).pixels.transpose(2, 0, 1).copy()
    ego = track.state_at(t0)
    pos = track.positions(t0, window.last_frame)
    vel_world = np.diff(pos, axis=0) / FRAME_PERIOD
    truth_velocity = world_to_ego(vel_world, ego.heading).reshape(-1)
    last = track.state_at(window.last_frame)
    return Sample(
        sample_id=sample_id(window), window=window, graphs=history, image=image,
        truth_velocity=truth_velocity, truth_positions=pos[1:],
        start_pose=(ego.x, ego.y, ego.heading), final_speed=float(np.hypot(last.vx, last.vy)),
        final_heading=last.heading,
        last_velocity=world_to_ego(np.array([ego.vx, ego.vy]), ego.heading), family=family,
    )


def build_samples(lane_map: LaneMap, tracks: TrackSet, raster_config: RasterConfig = RasterConfig(),
                  history_len: int = 10, future_len: int = 30, stride: int = 1,
                  family_of: dict | None = None, windows=None, graphs=None,
                  images: dict | None = None) -> list:
    """``graphs`` (precomputed SceneGraphs) and ``images`` (sample id -> raster) act as caches."""
    windows = windows if windows is not None else window_samples(tracks, history_len, future_len, stride)
    cache = GraphCache(lane_map, tracks)
    for g in graphs or ():
        cache._graphs[g.t] = g
    images = images or {}
    return [build_sample(lane_map, tracks, w, raster_config, cache,
                         (family_of or {}).get(w.ego_id), images.get(sample_id(w))) for w in windows]


@dataclass
class Batch:
    """Disjoint union of all history graphs of a batch, plus stacked images and targets.

    Only edges that end at an ego node are kept: the model reads nothing else.
    """
    node_features: np.ndarray   # (N, 5)
    edge_features: np.ndarray   # (E, 7)
    edge_source: np.ndarray     # (E,) node rows
    edge_target: np.ndarray     # (E,) positions in ego_rows.ravel()
    ego_rows: np.ndarray        # (T, B) node rows of the ego in each snapshot
    images: np.ndarray          # (B, 3, R, R) float in [0, 1]
    targets: np.ndarray         # (B, 2F)

    @property
    def size(self) -> int:
        return self.ego_rows.shape[1]


def collate(samples) -> Batch:
    T = len(samples[0].graphs)
    nodes, efeat, esrc, etgt = [], [], [], []
    ego_rows = np.zeros((T, len(samples)), dtype=np.int64)
    offset = 0
    for t in range(T):
        for b, smp in enumerate(samples):
            g = smp.graphs[t]
            ego = smp.window.ego_id
            if ego not in g.node_ids:
                raise KeyError(f"ego {ego} missing from graph at frame {g.t}")
            ego_local = g.node_ids.index(ego)
            ego_rows[t, b] = offset + ego_local
            nodes.append(g.nodes)
            slot = t * len(samples) + b
            for k, (o, tgt) in enumerate(g.edges):
                if tgt == ego:
                    esrc.append(offset + g.node_ids.index(o))
                    etgt.append(slot)
                    efeat.append(g.edge_features[k])
            offset += len(g.node_ids)
    return Batch(
        node_features=np.concatenate(nodes).reshape(-1, NODE_WIDTH),
        edge_features=np.array(efeat, dtype=np.float64).reshape(-1, EDGE_WIDTH),
        edge_source=np.array(esrc, dtype=np.int64),
        edge_target=np.array(etgt, dtype=np.int64),
        ego_rows=ego_rows,
        images=np.stack([s.image for s in samples]).astype(np.float64) / 255.0,
        targets=np.stack([s.truth_velocity for s in samples]),
    )


def constant_velocity(sample: Sample, future_len: int | None = None) -> np.ndarray:
    """Baseline: repeat the ego-frame velocity at t0 for every future step."""
    n = future_len or len(sample.truth_velocity) // 2
    return np.tile(sample.last_velocity, n)

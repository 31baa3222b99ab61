"""Per-timestep semantic scene graphs with merged, typed edges."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .lane_geometry import (
    LaneMap, ProjectionIdentity, candidate_projections, crossing_distance,
    longitudinal_distance,
)

AGENT_CLASSES = ("car", "truck", "pedestrian", "bike")
NODE_WIDTH = 5
EDGE_WIDTH = 7
EDGE_FIELDS = ("lon_certainty", "lat_certainty", "int_certainty", "path_distance",
               "int_path_distance", "centerline_distance", "int_centerline_distance")

LON, LAT, INT = "lon", "lat", "int"


def node_features(speed: float, agent_class: str) -> np.ndarray:
    """[|v|, one-hot(car, truck, pedestrian, bike)]."""
    out = np.zeros(NODE_WIDTH)
    out[0] = speed
    out[1 + AGENT_CLASSES.index(agent_class)] = 1.0
    return out


@dataclass(frozen=True)
class Relation:
    """One typed relation between a pair of projection identities."""
    kind: str
    weight: float
    distance: float
    origin_certainty: float
    origin_offset: float


@dataclass
class SceneGraph:
    t: int
    node_ids: list
    nodes: np.ndarray                       # (n, 5)
    edges: list = field(default_factory=list)  # (origin_id, target_id)
    edge_features: np.ndarray = field(default_factory=lambda: np.zeros((0, EDGE_WIDTH)))

    def index(self, vehicle_id) -> int:
        return self.node_ids.index(vehicle_id)

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "nodes": [{"id": i, "features": f.tolist()} for i, f in zip(self.node_ids, self.nodes)],
            "edges": [{"origin": o, "target": g, "features": f.tolist()}
                      for (o, g), f in zip(self.edges, self.edge_features)],
        }

    @classmethod
    def from_json(cls, obj: dict) -> SceneGraph:
        nodes = np.array([n["features"] for n in obj["nodes"]], dtype=np.float64).reshape(-1, NODE_WIDTH)
        feats = np.array([e["features"] for e in obj["edges"]], dtype=np.float64).reshape(-1, EDGE_WIDTH)
        return cls(obj["t"], [n["id"] for n in obj["nodes"]], nodes,
                   [(e["origin"], e["target"]) for e in obj["edges"]], feats)


def relate(lane_map: LaneMap, mi: ProjectionIdentity, mj: ProjectionIdentity):
    """Type the relation from identity ``mi`` to ``mj`` (longitudinal > lateral > intersecting)."""
    a, b = mi.coord, mj.coord
    weight = mi.certainty * mj.certainty
    lon = longitudinal_distance(lane_map, a, b)
    if lon is not None:
        return Relation(LON, weight, lon, mi.certainty, a.d)
    if lane_map.is_adjacent(a.lane_id, b.lane_id):
        return Relation(LAT, weight, b.s - a.s, mi.certainty, a.d)
    cross = crossing_distance(lane_map, a, b.lane_id)
    if cross is not None:
        return Relation(INT, weight, cross, mi.certainty, a.d)
    return None


def merge_parallel_edges(relations) -> np.ndarray:
    """Collapse the typed relations of one ordered pair into a 7-wide feature row.

    Certainties are per-type weight sums clamped to [0, 1]. Path distances are
    weight-weighted means (longitudinal and lateral share one slot). Centerline
    offsets come from the origin identity with the highest certainty among the
    contributing relations of the respective group.
    """
    out = np.zeros(EDGE_WIDTH)
    groups = {LON: [], LAT: [], INT: []}
    for r in relations:
        groups[r.kind].append(r)
    for col, kind in enumerate((LON, LAT, INT)):
        out[col] = min(1.0, max(0.0, sum(r.weight for r in groups[kind])))
    for rels, dist_col, cl_col in ((groups[LON] + groups[LAT], 3, 5), (groups[INT], 4, 6)):
        if not rels:
            continue
        wsum = sum(r.weight for r in rels)
        if wsum > 0:
            out[dist_col] = sum(r.weight * r.distance for r in rels) / wsum
        best = max(rels, key=lambda r: r.origin_certainty)  # first wins ties
        out[cl_col] = best.origin_offset
    return out


def build_scene_graph(lane_map: LaneMap, states, t: int = 0) -> SceneGraph:
    """Build the graph for one frame from an iterable of TrackStates.

    Nodes follow the order of ``states``. Vehicles without any lane
    projection stay as isolated nodes.
    """
    states = list(states)
    node_ids = [s.track_id for s in states]
    nodes = np.array([node_features(np.hypot(s.vx, s.vy), s.agent_class) for s in states],
                     dtype=np.float64).reshape(-1, NODE_WIDTH)
    idents = [candidate_projections(lane_map, (s.x, s.y, s.heading), s.track_id) for s in states]
    edges, feats = [], []
    for i, si in enumerate(states):
        for j, sj in enumerate(states):
            if i == j or not idents[i] or not idents[j]:
                continue
            rels = [r for mi in idents[i] for mj in idents[j]
                    if (r := relate(lane_map, mi, mj)) is not None]
            if rels:
                edges.append((si.track_id, sj.track_id))
                feats.append(merge_parallel_edges(rels))
    feats = np.array(feats, dtype=np.float64).reshape(-1, EDGE_WIDTH)
    return SceneGraph(t, node_ids, nodes, edges, feats)


def write_graphs_jsonl(graphs, path, extra: dict | None = None) -> None:
    """One graph per line; ``extra`` keys (e.g. a config hash) are added to every line."""
    with open(path, "w") as fh:
        for g in graphs:
            fh.write(json.dumps({**g.to_json(), **(extra or {})}) + "\n")


def read_graphs_jsonl(path) -> list:
    with open(path) as fh:
        return [SceneGraph.from_json(json.loads(line)) for line in fh if line.strip()]

"""Lane maps, Frenet projection, and topological distance queries."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HEADING_GATE = np.deg2rad(60.0)
CAPTURE_FACTOR = 1.5
MAX_CHAIN_LANES = 5
MAX_CHAIN_DISTANCE = 200.0
SUCCESSOR_TOLERANCE = 0.1
# A point more than this far beyond either lane end is not alongside the lane.
END_OVERSHOOT = 1e-6


class MapError(ValueError):
    pass


@dataclass(frozen=True)
class FrenetCoord:
    lane_id: object
    s: float
    d: float


@dataclass(frozen=True)
class ProjectionIdentity:
    vehicle_id: object
    coord: FrenetCoord
    certainty: float


class Lane:
    """A directed lane with a polyline centerline."""

    def __init__(self, lane_id, centerline, width: float):
        pts = np.asarray(centerline, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise MapError(f"lane {lane_id}: centerline needs >= 2 points of (x, y)")
        seg = np.diff(pts, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(seg_len <= 0):
            raise MapError(f"lane {lane_id}: consecutive centerline points coincide")
        if width <= 0:
            raise MapError(f"lane {lane_id}: width must be positive")
        self.id = lane_id
        self.centerline = pts
        self.width = float(width)
        self.seg = seg
        self.seg_len = seg_len
        self.cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        self.bbox = (lo[0], lo[1], hi[0], hi[1])

    @property
    def length(self) -> float:
        return float(self.cum[-1])

    def point_at(self, s: float) -> np.ndarray:
        i = int(np.clip(np.searchsorted(self.cum, s, side="right") - 1, 0, len(self.seg) - 1))
        t = (s - self.cum[i]) / self.seg_len[i]
        return self.centerline[i] + t * self.seg[i]

    def tangent_at(self, s: float) -> float:
        i = int(np.clip(np.searchsorted(self.cum, s, side="right") - 1, 0, len(self.seg) - 1))
        return float(np.arctan2(self.seg[i, 1], self.seg[i, 0]))

    def _project(self, point):
        """Return (s, d, segment index, overshoot beyond the lane ends)."""
        p = np.asarray(point, dtype=np.float64)
        rel = p - self.centerline[:-1]
        t_raw = (rel * self.seg).sum(axis=1) / (self.seg_len ** 2)
        t = np.clip(t_raw, 0.0, 1.0)
        foot = self.centerline[:-1] + t[:, None] * self.seg
        dist2 = ((p - foot) ** 2).sum(axis=1)
        i = int(np.argmin(dist2))  # first minimum: ties go to the earlier segment
        cross = self.seg[i, 0] * rel[i, 1] - self.seg[i, 1] * rel[i, 0]
        s = float(self.cum[i] + t[i] * self.seg_len[i])
        overshoot = 0.0
        if i == 0 and t_raw[i] < 0:
            overshoot = -t_raw[i] * self.seg_len[i]
        elif i == len(self.seg) - 1 and t_raw[i] > 1:
            overshoot = (t_raw[i] - 1.0) * self.seg_len[i]
        if overshoot > 0:
            # lateral component only, so d stays continuous past the lane ends
            d = float(cross / self.seg_len[i])
        else:
            d = float(np.copysign(np.sqrt(dist2[i]), cross if cross != 0 else 1.0))
        return s, d, i, float(overshoot)


def arc_length_project(lane: Lane, point) -> FrenetCoord:
    """Nearest-point projection of ``point`` onto the lane centerline."""
    s, d, _, _ = lane._project(point)
    return FrenetCoord(lane.id, s, d)


def _wrap(angle):
    return (angle + np.pi) % (2.0 * np.pi) - np.pi


class LaneMap:
    """Immutable lane topology; crossing points are computed once at construction."""

    def __init__(self, lanes, successors=(), adjacent_left=()):
        self.lanes: dict = {}
        for lane in lanes:
            if lane.id in self.lanes:
                raise MapError(f"duplicate lane id {lane.id!r}")
            self.lanes[lane.id] = lane
        self.successors: dict = {lid: [] for lid in self.lanes}
        self.predecessors: dict = {lid: [] for lid in self.lanes}
        for a, b in successors:
            self._check_ids(a, b)
            end, start = self.lanes[a].centerline[-1], self.lanes[b].centerline[0]
            if np.hypot(*(end - start)) > SUCCESSOR_TOLERANCE:
                raise MapError(f"successor {a!r}->{b!r}: endpoints more than "
                               f"{SUCCESSOR_TOLERANCE} m apart")
            if b not in self.successors[a]:
                self.successors[a].append(b)
                self.predecessors[b].append(a)
        self.left_of: dict = {}
        self.right_of: dict = {}
        self.adjacent: set = set()
        for a, b in adjacent_left:
            self._check_ids(a, b)
            self.left_of[a] = b
            self.right_of[b] = a
            self.adjacent.add((a, b))
            self.adjacent.add((b, a))
        self.crossing_pairs: list = []
        self._crossings: dict = {}
        self._compute_crossings()
        ids = list(self.lanes)
        self._bbox = np.array([self.lanes[i].bbox for i in ids]).reshape(-1, 4)
        self._ids = ids

    def _check_ids(self, *ids):
        for i in ids:
            if i not in self.lanes:
                raise MapError(f"unknown lane id {i!r}")

    def _compute_crossings(self) -> None:
        ids = list(self.lanes)
        for ia, a in enumerate(ids):
            la = self.lanes[a]
            for b in ids[ia + 1:]:
                lb = self.lanes[b]
                if (b in self.successors[a] or a in self.successors[b]
                        or (a, b) in self.adjacent):
                    continue
                if (la.bbox[2] < lb.bbox[0] or lb.bbox[2] < la.bbox[0]
                        or la.bbox[3] < lb.bbox[1] or lb.bbox[3] < la.bbox[1]):
                    continue
                pts = segment_intersections(la, lb)
                if pts:
                    self.crossing_pairs.append((a, b))
                    self._crossings[(a, b)] = sorted(pts)
                    self._crossings[(b, a)] = sorted((sb, sa) for sa, sb in pts)

    def crossings(self, a, b) -> list:
        """Sorted (s on a, s on b) crossing positions of lanes ``a`` and ``b``."""
        return self._crossings.get((a, b), [])

    def is_adjacent(self, a, b) -> bool:
        return (a, b) in self.adjacent

    def lanes_near(self, point, radius: float) -> list:
        x, y = point
        bb = self._bbox
        mask = ((bb[:, 0] - radius <= x) & (x <= bb[:, 2] + radius)
                & (bb[:, 1] - radius <= y) & (y <= bb[:, 3] + radius))
        return [self.lanes[self._ids[i]] for i in np.flatnonzero(mask)]

    # serialization

    def to_json(self) -> dict:
        succ = [[a, b] for a in self.lanes for b in self.successors[a]]
        left = [[a, b] for a, b in self.left_of.items()]
        return {
            "lanes": [{"id": l.id, "centerline": l.centerline.tolist(), "width": l.width}
                      for l in self.lanes.values()],
            "successors": succ,
            "adjacent_left": left,
            "crossings": "derived",
        }

    @classmethod
    def from_json(cls, obj: dict) -> LaneMap:
        try:
            lanes = [Lane(_key(l["id"]), l["centerline"], l["width"]) for l in obj["lanes"]]
        except (KeyError, TypeError) as exc:
            raise MapError(f"malformed map JSON: {exc}") from None
        succ = [(_key(a), _key(b)) for a, b in obj.get("successors", [])]
        left = [(_key(a), _key(b)) for a, b in obj.get("adjacent_left", [])]
        return cls(lanes, succ, left)

    def transformed(self, rotation: float, translation) -> LaneMap:
        """Copy of the map under a rigid motion (rotate about the origin, then translate)."""
        c, s = np.cos(rotation), np.sin(rotation)
        rot = np.array([[c, -s], [s, c]])
        t = np.asarray(translation, dtype=np.float64)
        lanes = [Lane(l.id, l.centerline @ rot.T + t, l.width) for l in self.lanes.values()]
        succ = [(a, b) for a in self.lanes for b in self.successors[a]]
        return LaneMap(lanes, succ, list(self.left_of.items()))


def _key(v):
    return tuple(v) if isinstance(v, list) else v


def load_map(path) -> LaneMap:
    return LaneMap.from_json(json.loads(Path(path).read_text()))


def save_map(lane_map: LaneMap, path) -> None:
    Path(path).write_text(json.dumps(lane_map.to_json()) + "\n")


# parametric slack so that touching segments are found regardless of roundoff
TOUCH = 1e-9
# intersections this close to an end of both lanes are merges or splits, not crossings
END_TOUCH = 1e-6


def segment_intersections(la: Lane, lb: Lane) -> list:
    """All (s_a, s_b) where the two centerlines intersect.

    Touching counts, except where the point is an endpoint of both lanes:
    two lanes that only meet end to end (a merge or a split) do not cross.
    """
    p = la.centerline[:-1][:, None, :]
    r = la.seg[:, None, :]
    q = lb.centerline[:-1][None, :, :]
    u = lb.seg[None, :, :]
    denom = r[..., 0] * u[..., 1] - r[..., 1] * u[..., 0]
    qp = q - p
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (qp[..., 0] * u[..., 1] - qp[..., 1] * u[..., 0]) / denom
        w = (qp[..., 0] * r[..., 1] - qp[..., 1] * r[..., 0]) / denom
    ok = (denom != 0) & (t >= -TOUCH) & (t <= 1 + TOUCH) & (w >= -TOUCH) & (w <= 1 + TOUCH)
    out = []
    for i, j in zip(*np.nonzero(ok)):
        sa = float(np.clip(la.cum[i] + t[i, j] * la.seg_len[i], 0.0, la.length))
        sb = float(np.clip(lb.cum[j] + w[i, j] * lb.seg_len[j], 0.0, lb.length))
        at_end = lambda s, lane: s < END_TOUCH or s > lane.length - END_TOUCH
        if at_end(sa, la) and at_end(sb, lb):
            continue
        if not any(abs(sa - x) < END_TOUCH for x, _ in out):
            out.append((sa, sb))
    return out


def candidate_projections(lane_map: LaneMap, pose, vehicle_id=None) -> list:
    """Lanes the pose may belong to, with Gaussian lateral-offset certainties.

    A lane qualifies when the point lies alongside it, ``|d| <= 1.5 * width``,
    and the heading is within 60 degrees of the local lane direction. Weights
    ``exp(-d^2 / (2 sigma^2))`` with ``sigma = width / 4`` are normalized to
    sum to one over the qualifying lanes.
    """
    x, y, heading = pose
    max_width = max((l.width for l in lane_map.lanes.values()), default=0.0)
    found = []
    for lane in lane_map.lanes_near((x, y), CAPTURE_FACTOR * max_width):
        s, d, i, overshoot = lane._project((x, y))
        if overshoot > END_OVERSHOOT or abs(d) > CAPTURE_FACTOR * lane.width:
            continue
        tangent = np.arctan2(lane.seg[i, 1], lane.seg[i, 0])
        if abs(_wrap(heading - tangent)) > HEADING_GATE:
            continue
        sigma = lane.width / 4.0
        found.append((FrenetCoord(lane.id, s, d), np.exp(-d * d / (2.0 * sigma * sigma))))
    total = sum(w for _, w in found)
    return [ProjectionIdentity(vehicle_id, c, float(w / total)) for c, w in found]


def _forward_distance(lane_map: LaneMap, a: FrenetCoord, b: FrenetCoord):
    """Shortest distance from a forward to b through successor chains, if any."""
    best = None
    start = lane_map.lanes[a.lane_id]
    stack = [(a.lane_id, start.length - a.s, 1)]
    while stack:
        lane_id, acc, n_lanes = stack.pop()
        if acc > MAX_CHAIN_DISTANCE or n_lanes >= MAX_CHAIN_LANES:
            continue
        for nxt in lane_map.successors[lane_id]:
            if nxt == b.lane_id:
                dist = acc + b.s
                if dist <= MAX_CHAIN_DISTANCE and (best is None or dist < best):
                    best = dist
            else:
                stack.append((nxt, acc + lane_map.lanes[nxt].length, n_lanes + 1))
    return best


def longitudinal_distance(lane_map: LaneMap, a: FrenetCoord, b: FrenetCoord):
    """Signed arc distance from a to b along the lane topology, or None.

    Positive when b is ahead of a. Chains are limited to five lanes and 200 m.
    """
    if a.lane_id == b.lane_id:
        return b.s - a.s
    ahead = _forward_distance(lane_map, a, b)
    behind = _forward_distance(lane_map, b, a)
    if ahead is None and behind is None:
        return None
    if behind is None or (ahead is not None and ahead <= behind):
        return ahead
    return -behind


def crossing_distance(lane_map: LaneMap, a: FrenetCoord, lane_b):
    """Arc distance from a to the first downstream crossing with ``lane_b``, or None."""
    if a.lane_id == lane_b:
        return None
    best = None
    stack = [(a.lane_id, -a.s, 1)]
    while stack:
        lane_id, offset, n_lanes = stack.pop()
        for sa, _ in lane_map.crossings(lane_id, lane_b):
            dist = offset + sa
            if dist >= 0:
                if dist <= MAX_CHAIN_DISTANCE and (best is None or dist < best):
                    best = dist
                break
        reach = offset + lane_map.lanes[lane_id].length
        if reach > MAX_CHAIN_DISTANCE or n_lanes >= MAX_CHAIN_LANES:
            continue
        for nxt in lane_map.successors[lane_id]:
            if nxt != lane_b:
                stack.append((nxt, reach, n_lanes + 1))
    return best

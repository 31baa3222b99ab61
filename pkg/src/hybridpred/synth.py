"""Deterministic synthetic traffic scenarios for desk-scale experiments.

Every episode lives on its own disjoint patch of the map (spatially, in track
and lane ids, and in frame index), so a whole dataset is one LaneMap plus one
TrackSet.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_io import FRAME_PERIOD, Track, TrackSet
from .lane_geometry import Lane, LaneMap

FAMILIES = ("follow_brake", "lone_curve", "crossing", "lane_merge")
CAR = (4.5, 1.8)
TRUCK = (8.0, 2.5)
EPISODE_FRAMES_STRIDE = 1000
EPISODE_SPACING = 3000.0


class SynthConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    scenario_family: str
    n_episodes: int = 10
    seed: int = 0
    speed_range: tuple = (6.0, 14.0)
    gap_range: tuple = (12.0, 30.0)
    curve_radius_range: tuple = (15.0, 40.0)
    duration_s: float = 12.0
    lane_width: float = 3.5
    episode_offset: int = 0

    def validate(self) -> None:
        if self.scenario_family not in FAMILIES:
            raise SynthConfigError(f"unknown scenario family {self.scenario_family!r}")
        if self.n_episodes < 1:
            raise SynthConfigError("n_episodes must be >= 1")
        for name in ("speed_range", "gap_range", "curve_radius_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise SynthConfigError(f"{name} must satisfy 0 < lo <= hi, got {(lo, hi)}")
        if not 0 < self.duration_s * 10 < EPISODE_FRAMES_STRIDE - 10:
            raise SynthConfigError("duration_s out of range")
        if self.lane_width <= 0:
            raise SynthConfigError("lane_width must be positive")
        if self.episode_offset < 0:
            raise SynthConfigError("episode_offset must be >= 0")


@dataclass(frozen=True)
class IDMParams:
    desired_speed: float
    max_accel: float = 1.5
    comfort_decel: float = 2.0
    min_gap: float = 2.0
    time_headway: float = 1.2
    max_decel: float = 9.0


def idm_accel(p: IDMParams, v: float, gap: float | None = None, v_lead: float = 0.0) -> float:
    """Intelligent-driver acceleration; ``gap=None`` means free road."""
    free = 1.0 - (v / p.desired_speed) ** 4
    if gap is None:
        return max(-p.max_decel, p.max_accel * free)
    gap = max(gap, 0.1)
    s_star = p.min_gap + max(0.0, v * p.time_headway
                             + v * (v - v_lead) / (2.0 * np.sqrt(p.max_accel * p.comfort_decel)))
    return max(-p.max_decel, p.max_accel * (free - (s_star / gap) ** 2))


class _Vehicle:
    def __init__(self, route: Lane, s: float, v: float, idm: IDMParams, size=CAR,
                 agent_class: str = "car"):
        self.route = route
        self.s = s
        self.v = v
        self.idm = idm
        self.length, self.width = size
        self.agent_class = agent_class
        self.s_log: list = []


def _route(points) -> Lane:
    pts = [np.asarray(points[0], dtype=np.float64)]
    for p in points[1:]:
        p = np.asarray(p, dtype=np.float64)
        if np.hypot(*(p - pts[-1])) > 1e-9:
            pts.append(p)
    return Lane("route", np.array(pts), 1.0)


def _straight(start, heading, length, step=5.0) -> np.ndarray:
    n = max(1, int(np.ceil(length / step)))
    t = np.linspace(0.0, length, n + 1)
    return np.asarray(start) + t[:, None] * np.array([np.cos(heading), np.sin(heading)])


def _arc(start, heading, radius, turn, step=1.0) -> np.ndarray:
    """Arc starting at ``start`` tangent to ``heading``; positive turn = left."""
    n = max(2, int(np.ceil(radius * abs(turn) / step)))
    side = np.sign(turn)
    center = np.asarray(start) + radius * np.array([-np.sin(heading), np.cos(heading)]) * side
    phi0 = heading - side * np.pi / 2
    phi = phi0 + np.linspace(0.0, turn, n + 1)
    return center + radius * np.stack([np.cos(phi), np.sin(phi)], axis=1)


def _u(rng, lo_hi) -> float:
    return float(rng.uniform(*lo_hi))


# episode builders: return (lanes, successors, adjacent_left, vehicles, leader_fn)

def _follow_brake(rng, cfg):
    w = cfg.lane_width
    right = Lane(0, _straight((0.0, 0.0), 0.0, 400.0), w)
    left = Lane(1, _straight((0.0, w), 0.0, 400.0), w)
    slow_v = _u(rng, (0.0, 3.0))
    truck = _Vehicle(_route(right.centerline), _u(rng, (170.0, 230.0)), slow_v,
                     IDMParams(desired_speed=max(slow_v, 0.1), max_accel=1e-9),
                     TRUCK, "truck")
    platoon = []
    s = truck.s - _u(rng, (60.0, 110.0))
    for _ in range(int(rng.integers(2, 4))):
        v = _u(rng, cfg.speed_range)
        platoon.append(_Vehicle(_route(right.centerline), s, v, IDMParams(desired_speed=v * 1.1)))
        s -= _u(rng, cfg.gap_range) + CAR[0]
    vehicles = [truck] + platoon
    if rng.random() < 0.5:
        v = _u(rng, cfg.speed_range)
        vehicles.append(_Vehicle(_route(left.centerline), _u(rng, (20.0, 120.0)), v,
                                 IDMParams(desired_speed=v)))

    def leaders(k):
        if 1 <= k <= len(platoon):
            lead = vehicles[k - 1]
            return lead.s - vehicles[k].s - (lead.length + vehicles[k].length) / 2, lead.v
        return None, 0.0

    return [right, left], [], [(0, 1)], vehicles, leaders


def _lone_curve(rng, cfg):
    w = cfg.lane_width
    radius = _u(rng, cfg.curve_radius_range)
    turn = float(rng.choice([-1.0, 1.0])) * np.deg2rad(_u(rng, (60.0, 150.0)))
    lead_in = _straight((0.0, 0.0), 0.0, _u(rng, (20.0, 50.0)))
    arc = _arc(lead_in[-1], 0.0, radius, turn)
    out = _straight(arc[-1], turn, 120.0)
    lane = Lane(0, np.concatenate([lead_in, arc[1:], out[1:]]), w)
    v_max = min(cfg.speed_range[1], np.sqrt(2.5 * radius))
    v = _u(rng, (min(cfg.speed_range[0], v_max), v_max))
    vehicle = _Vehicle(_route(lane.centerline), _u(rng, (0.0, 10.0)), v, IDMParams(desired_speed=v))
    return [lane], [], [], [vehicle], lambda k: (None, 0.0)


def _crossing(rng, cfg):
    w = cfg.lane_width
    half = 150.0
    main = Lane(0, _straight((-half, 0.0), 0.0, 2 * half), w)
    minor = Lane(1, _straight((0.0, -half), np.pi / 2, 2 * half), w)
    v_main, v_minor = _u(rng, cfg.speed_range), _u(rng, cfg.speed_range)
    first = _Vehicle(_route(main.centerline), half - _u(rng, (20.0, 60.0)), v_main,
                     IDMParams(desired_speed=v_main))
    yielder = _Vehicle(_route(minor.centerline), half - _u(rng, (20.0, 60.0)), v_minor,
                       IDMParams(desired_speed=v_minor))
    vehicles = [first, yielder]
    if rng.random() < 0.5:
        v = _u(rng, cfg.speed_range)
        vehicles.append(_Vehicle(_route(main.centerline),
                                 first.s - _u(rng, cfg.gap_range) - CAR[0], v,
                                 IDMParams(desired_speed=v)))
    stop_line = half - w - CAR[0] / 2

    def leaders(k):
        if k == 1:
            # yield until every priority vehicle has cleared the conflict zone
            pending = any(vh.s < half + w + vh.length for vh in (vehicles[0], *vehicles[2:]))
            if pending and yielder.s < stop_line:
                return stop_line - yielder.s, 0.0
            return None, 0.0
        if k == 2:
            lead = vehicles[0]
            return lead.s - vehicles[2].s - CAR[0], lead.v
        return None, 0.0

    return [main, minor], [], [], vehicles, leaders


def _lane_merge(rng, cfg):
    w = cfg.lane_width
    before = Lane(0, _straight((-150.0, 0.0), 0.0, 150.0), w)
    after = Lane(1, _straight((0.0, 0.0), 0.0, 150.0), w)
    ramp_pts = np.concatenate([_straight((-150.0, -w), 0.0, 110.0),
                               _straight((-40.0, -w), np.arctan2(w, 40.0), np.hypot(40.0, w))[1:]])
    ramp_pts[-1] = (0.0, 0.0)
    ramp = Lane(2, ramp_pts, w)
    main_route = _route(np.concatenate([before.centerline, after.centerline[1:]]))
    ramp_route = _route(np.concatenate([ramp.centerline, after.centerline[1:]]))
    merge_at = {id(main_route): before.length, id(ramp_route): ramp.length}
    vehicles = []
    for route, n in ((main_route, int(rng.integers(1, 3))), (ramp_route, 1)):
        s = merge_at[id(route)] - _u(rng, (40.0, 90.0))
        for _ in range(n):
            v = _u(rng, cfg.speed_range)
            vehicles.append(_Vehicle(route, s, v, IDMParams(desired_speed=v)))
            s -= _u(rng, cfg.gap_range) + CAR[0]
    priority_bias = 8.0

    def coord(vh):
        return vh.s - merge_at[id(vh.route)]

    def leaders(k):
        me = vehicles[k]
        bias = lambda vh: coord(vh) - (priority_bias if vh.route is ramp_route and coord(vh) < 0 else 0.0)
        ahead = [vh for vh in vehicles if vh is not me and bias(vh) > bias(me)]
        if not ahead:
            return None, 0.0
        lead = min(ahead, key=bias)
        gap = coord(lead) - coord(me) - (lead.length + me.length) / 2
        if gap < 0 and me.route is ramp_route and coord(me) < 0:
            return -coord(me) - me.length / 2, 0.0  # wait at the merge point
        return gap, lead.v

    return [before, after, ramp], [(0, 1), (2, 1)], [], vehicles, leaders


_BUILDERS = {"follow_brake": _follow_brake, "lone_curve": _lone_curve,
             "crossing": _crossing, "lane_merge": _lane_merge}


def _simulate(vehicles, leaders, n_frames: int) -> None:
    dt = FRAME_PERIOD
    for _ in range(n_frames):
        for vh in vehicles:
            vh.s_log.append(vh.s)
        accel = []
        for k, vh in enumerate(vehicles):
            gap, v_lead = leaders(k)
            accel.append(idm_accel(vh.idm, vh.v, gap, v_lead))
        for vh, a in zip(vehicles, accel):
            vh.s += vh.v * dt
            vh.v = max(0.0, vh.v + a * dt)


def _wrap(a: np.ndarray) -> np.ndarray:
    a = (a + np.pi) % (2 * np.pi) - np.pi
    return np.where(a <= -np.pi, a + 2 * np.pi, a)


def generate_synthetic(config: SynthConfig):
    """Return ``(LaneMap, TrackSet)`` for ``config``; a pure function of the config."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    n_frames = int(round(config.duration_s / FRAME_PERIOD))
    dt = FRAME_PERIOD
    all_lanes, all_succ, all_left, tracks = [], [], [], []
    for e in range(config.episode_offset, config.episode_offset + config.n_episodes):
        lanes, succ, left, vehicles, leaders = _BUILDERS[config.scenario_family](rng, config)
        _simulate(vehicles, leaders, n_frames)
        rot = float(rng.uniform(-np.pi, np.pi))
        c, s = np.cos(rot), np.sin(rot)
        R = np.array([[c, -s], [s, c]])
        shift = np.array([EPISODE_SPACING * e, 0.0])
        lane_base = e * 10
        for lane in lanes:
            all_lanes.append(Lane(lane_base + lane.id, lane.centerline @ R.T + shift, lane.width))
        all_succ += [(lane_base + a, lane_base + b) for a, b in succ]
        all_left += [(lane_base + a, lane_base + b) for a, b in left]
        frames = e * EPISODE_FRAMES_STRIDE + np.arange(n_frames)
        for k, vh in enumerate(vehicles):
            s_arr = np.array(vh.s_log)
            pts = np.array([vh.route.point_at(si) for si in s_arr]) @ R.T + shift
            heading = _wrap(np.array([vh.route.tangent_at(si) for si in s_arr]) + rot)
            vel = np.empty_like(pts)
            vel[:-1] = (pts[1:] - pts[:-1]) / dt
            vel[-1] = vel[-2]
            tracks.append(Track(e * 100 + k + 1, frames, pts[:, 0], pts[:, 1], vel[:, 0],
                                vel[:, 1], heading, np.full(n_frames, vh.length),
                                np.full(n_frames, vh.width), vh.agent_class))
    return LaneMap(all_lanes, all_succ, all_left), TrackSet(tracks)


def generate_mixed(families, episodes_per_family, seed: int = 0, **overrides):
    """Concatenate several families into one map/track set.

    Returns ``(LaneMap, TrackSet, family_of)`` where ``family_of`` maps track
    id to its scenario family.
    """
    lanes, succ, left, tracks, family_of = [], [], [], [], {}
    offset = 0
    for i, fam in enumerate(families):
        n = episodes_per_family[i] if isinstance(episodes_per_family, (list, tuple)) else episodes_per_family
        cfg = SynthConfig(fam, n, seed=seed * 1000 + i, episode_offset=offset, **overrides)
        m, ts = generate_synthetic(cfg)
        lanes += list(m.lanes.values())
        succ += [(a, b) for a in m.lanes for b in m.successors[a]]
        left += list(m.left_of.items())
        for t in ts:
            tracks.append(t)
            family_of[t.track_id] = fam
        offset += n
    return LaneMap(lanes, succ, left), TrackSet(tracks), family_of

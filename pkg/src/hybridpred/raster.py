"""Ego-centric RGB bird's-eye rasters with fading motion history."""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data_io import SampleWindow, TrackSet
from .lane_geometry import LaneMap

BLACK = (0, 0, 0)
DASH_PX = 8
# Coordinates this close below a pixel boundary count as on it. Structured scenes
# (ego on a centerline, 3.5 m lanes at 0.25 m/px) put edges exactly on boundaries,
# where roundoff from a rigid motion would otherwise flip the chosen row.
PIXEL_SNAP = 1e-6


class RasterInputError(ValueError):
    pass


@dataclass(frozen=True)
class RasterConfig:
    resolution: int = 96
    pixel_size: float = 0.25
    history_states: int = 10
    lane_edge_color: tuple = (255, 255, 255)
    marking_color: tuple = (128, 128, 128)
    virtual_color: tuple = (0, 0, 255)
    ego_color: tuple = (255, 0, 0)

    def __post_init__(self):
        if self.resolution <= 0 or self.resolution % 2:
            raise ValueError("resolution must be a positive even number")
        if self.pixel_size <= 0:
            raise ValueError("pixel_size must be positive")

    @property
    def extent(self) -> float:
        return self.resolution * self.pixel_size


class RasterImage:
    """Row-major RGB image backed by a (height, width, 3) uint8 array."""

    def __init__(self, pixels: np.ndarray):
        if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.dtype != np.uint8:
            raise ValueError("pixels must be an (h, w, 3) uint8 array")
        self.pixels = pixels

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def to_bytes(self) -> bytes:
        return self.pixels.tobytes()

    def write_ppm(self, path, comment: str | None = None) -> None:
        note = f"# {comment}\n" if comment else ""
        header = f"P6\n{note}{self.width} {self.height}\n255\n".encode()
        Path(path).write_bytes(header + self.to_bytes())

    @classmethod
    def read_ppm(cls, path) -> RasterImage:
        raw = Path(path).read_bytes()
        tokens, pos = [], 0
        while len(tokens) < 4:
            while pos < len(raw) and raw[pos:pos + 1].isspace():
                pos += 1
            if raw[pos:pos + 1] == b"#":
                pos = raw.index(b"\n", pos) + 1
                continue
            end = pos
            while end < len(raw) and not raw[end:end + 1].isspace():
                end += 1
            if end == pos:
                raise ValueError("truncated PPM header")
            tokens.append(raw[pos:end])
            pos = end
        if tokens[0] != b"P6" or tokens[3] != b"255":
            raise ValueError("not an 8-bit binary PPM file")
        w, h = int(tokens[1]), int(tokens[2])
        body = raw[pos + 1:]
        if len(body) != 3 * w * h:
            raise ValueError(f"PPM payload has {len(body)} bytes, expected {3 * w * h}")
        return cls(np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3).copy())


def world_to_pixel(ego_pose, point, config: RasterConfig):
    """Continuous pixel coordinates; ego at the center facing +x, image y pointing down."""
    ex, ey, heading = ego_pose
    pts = np.asarray(point, dtype=np.float64)
    dx, dy = pts[..., 0] - ex, pts[..., 1] - ey
    c, s = np.cos(heading), np.sin(heading)
    forward = c * dx + s * dy
    left = -s * dx + c * dy
    half = config.resolution / 2
    px = half + forward / config.pixel_size
    py = half - left / config.pixel_size
    if pts.ndim == 1:
        return float(px), float(py)
    return np.stack([px, py], axis=-1)


def track_color(track_id: int) -> tuple:
    """Deterministic green/blue color for a non-ego participant."""
    h = zlib.crc32(str(int(track_id)).encode())
    return (0, 64 + h % 192, 64 + (h >> 8) % 192)


def fade(age: int, history_states: int) -> float:
    return 1.0 - 0.9 * age / history_states


def _scaled(color, factor: float) -> tuple:
    return tuple(int(round(c * factor)) for c in color)


def fill_rectangle(img: np.ndarray, corners: np.ndarray, color) -> None:
    """Fill pixels whose centers lie inside the convex quad ``corners`` (pixel coords)."""
    h, w = img.shape[:2]
    x0 = max(int(np.floor(corners[:, 0].min())), 0)
    x1 = min(int(np.ceil(corners[:, 0].max())), w - 1)
    y0 = max(int(np.floor(corners[:, 1].min())), 0)
    y1 = min(int(np.ceil(corners[:, 1].max())), h - 1)
    if x0 > x1 or y0 > y1:
        return
    cx, cy = np.meshgrid(np.arange(x0, x1 + 1) + 0.5, np.arange(y0, y1 + 1) + 0.5)
    area = 0.0
    for i in range(4):
        a, b = corners[i], corners[(i + 1) % 4]
        area += a[0] * b[1] - b[0] * a[1]
    orient = 1.0 if area >= 0 else -1.0
    inside = np.ones(cx.shape, dtype=bool)
    for i in range(4):
        a, b = corners[i], corners[(i + 1) % 4]
        edge = (b[0] - a[0]) * (cy - a[1]) - (b[1] - a[1]) * (cx - a[0])
        inside &= orient * edge >= 0
    img[y0:y1 + 1, x0:x1 + 1][inside] = color


def stroke_polyline(img: np.ndarray, pts: np.ndarray, color, dash_px: int | None = None) -> None:
    """1-px DDA stroke through pixel-space points; dashes follow the polyline arc length."""
    h, w = img.shape[:2]
    arc = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        seg = float(np.hypot(*(b - a)))
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        if hi[0] < -1 or hi[1] < -1 or lo[0] > w + 1 or lo[1] > h + 1 or seg == 0.0:
            arc += seg
            continue
        n = int(np.ceil(max(abs(b[0] - a[0]), abs(b[1] - a[1])) - PIXEL_SNAP)) + 1
        t = np.linspace(0.0, 1.0, n)
        xs = np.floor(a[0] + t * (b[0] - a[0]) + PIXEL_SNAP).astype(np.int64)
        ys = np.floor(a[1] + t * (b[1] - a[1]) + PIXEL_SNAP).astype(np.int64)
        keep = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
        if dash_px:
            phase = np.floor((arc + t * seg) / dash_px + PIXEL_SNAP).astype(np.int64)
            keep &= phase % 2 == 0
        img[ys[keep], xs[keep]] = color
        arc += seg


def _offset_polyline(pts: np.ndarray, offset: float) -> np.ndarray:
    seg = np.diff(pts, axis=0)
    normals = np.stack([-seg[:, 1], seg[:, 0]], axis=1) / np.hypot(seg[:, 0], seg[:, 1])[:, None]
    vert = np.empty_like(pts)
    vert[0], vert[-1] = normals[0], normals[-1]
    if len(pts) > 2:
        mid = normals[:-1] + normals[1:]
        norm = np.hypot(mid[:, 0], mid[:, 1])[:, None]
        vert[1:-1] = np.where(norm > 1e-9, mid / np.maximum(norm, 1e-12), normals[1:])
    return pts + offset * vert


def is_virtual(lane_map: LaneMap, lane_id) -> bool:
    """Lanes crossed by another lane away from their endpoints (intersection connectors)."""
    length = lane_map.lanes[lane_id].length
    for a, b in lane_map.crossing_pairs:
        if lane_id in (a, b):
            other = b if a == lane_id else a
            if any(1e-6 < s < length - 1e-6 for s, _ in lane_map.crossings(lane_id, other)):
                return True
    return False


def draw_map(img: np.ndarray, lane_map: LaneMap, ego_pose, config: RasterConfig) -> None:
    radius = config.extent * 0.75
    for lane in lane_map.lanes_near(ego_pose[:2], radius):
        virtual = is_virtual(lane_map, lane.id)
        for side, neighbours in ((1.0, lane_map.left_of), (-1.0, lane_map.right_of)):
            boundary = _offset_polyline(lane.centerline, side * lane.width / 2)
            px = world_to_pixel(ego_pose, boundary, config)
            if virtual:
                stroke_polyline(img, px, config.virtual_color, DASH_PX)
            elif lane.id in neighbours:
                stroke_polyline(img, px, config.marking_color)
            else:
                stroke_polyline(img, px, config.lane_edge_color)


def _footprint(ego_pose, state, config: RasterConfig) -> np.ndarray:
    c, s = np.cos(state.heading), np.sin(state.heading)
    hl, hw = state.length / 2, state.width / 2
    local = np.array([[hl, hw], [hl, -hw], [-hl, -hw], [-hl, hw]])
    world = local @ np.array([[c, s], [-s, c]]) + (state.x, state.y)
    return world_to_pixel(ego_pose, world, config)


def rasterize(lane_map: LaneMap, tracks: TrackSet, window: SampleWindow,
              config: RasterConfig = RasterConfig()) -> RasterImage:
    """Render the scene at ``window.t0`` centered on and aligned with the ego vehicle."""
    if window.ego_id not in tracks.tracks or not tracks[window.ego_id].covers(window.t0):
        raise RasterInputError(f"no ego state for track {window.ego_id} at frame {window.t0}")
    ego_state = tracks[window.ego_id].state_at(window.t0)
    ego_pose = (ego_state.x, ego_state.y, ego_state.heading)
    n = config.resolution
    img = np.zeros((n, n, 3), dtype=np.uint8)
    draw_map(img, lane_map, ego_pose, config)

    reach = config.extent + 20.0
    nearby = []
    for track in tracks:
        lo, hi = window.t0 - config.history_states, window.t0
        if track.last_frame < lo or track.first_frame > hi:
            continue
        i0, i1 = max(lo, track.first_frame) - track.first_frame, min(hi, track.last_frame) - track.first_frame
        if np.min(np.hypot(track.x[i0:i1 + 1] - ego_state.x, track.y[i0:i1 + 1] - ego_state.y)) < reach:
            nearby.append(track)

    def base_color(track):
        return config.ego_color if track.track_id == window.ego_id else track_color(track.track_id)

    for age in range(config.history_states, 0, -1):
        factor = fade(age, config.history_states)
        for track in nearby:
            if track.covers(window.t0 - age):
                st = track.state_at(window.t0 - age)
                fill_rectangle(img, _footprint(ego_pose, st, config), _scaled(base_color(track), factor))
    for track in nearby:
        if track.track_id != window.ego_id and track.covers(window.t0):
            st = track.state_at(window.t0)
            fill_rectangle(img, _footprint(ego_pose, st, config), base_color(track))
    fill_rectangle(img, _footprint(ego_pose, ego_state, config), config.ego_color)
    return RasterImage(img)

"""Track data: CSV loading/export and sample windowing."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

FRAME_PERIOD = 0.1
FRAME_MS = 100
CSV_COLUMNS = ("track_id", "frame_id", "timestamp_ms", "agent_type", "x", "y", "vx", "vy",
               "psi_rad", "length", "width")
AGENT_ALIASES = {
    "car": "car", "truck": "truck", "bus": "truck",
    "pedestrian": "pedestrian", "pedestrian/bicycle": "pedestrian",
    "bike": "bike", "bicycle": "bike",
}
# Footprints for rows (e.g. pedestrians) that leave length/width empty.
DEFAULT_SIZE = {"car": (4.5, 1.8), "truck": (8.0, 2.5), "pedestrian": (0.5, 0.5), "bike": (1.8, 0.6)}


class TrackParseError(ValueError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class TrackIntegrityError(ValueError):
    pass


@dataclass(frozen=True)
class TrackState:
    track_id: int
    frame: int
    x: float
    y: float
    vx: float
    vy: float
    heading: float
    length: float
    width: float
    agent_class: str = "car"


class Track:
    """One agent's contiguous 10 Hz state sequence, stored column-wise."""

    def __init__(self, track_id: int, frames, x, y, vx, vy, heading, length, width,
                 agent_class: str = "car"):
        self.track_id = int(track_id)
        self.frames = np.asarray(frames, dtype=np.int64)
        self.x = np.asarray(x, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        self.vx = np.asarray(vx, dtype=np.float64)
        self.vy = np.asarray(vy, dtype=np.float64)
        self.heading = np.asarray(heading, dtype=np.float64)
        self.length = np.asarray(length, dtype=np.float64)
        self.width = np.asarray(width, dtype=np.float64)
        self.agent_class = agent_class
        self._validate()

    def _validate(self) -> None:
        n = len(self.frames)
        if n == 0:
            raise TrackIntegrityError(f"track {self.track_id}: no states")
        for name in ("x", "y", "vx", "vy", "heading", "length", "width"):
            if len(getattr(self, name)) != n:
                raise TrackIntegrityError(f"track {self.track_id}: column {name} length mismatch")
        if np.any(np.diff(self.frames) <= 0):
            raise TrackIntegrityError(f"track {self.track_id}: frames not strictly increasing")
        if np.any(np.diff(self.frames) != 1):
            raise TrackIntegrityError(f"track {self.track_id}: frames not contiguous")
        if np.any(self.length <= 0) or np.any(self.width <= 0):
            raise TrackIntegrityError(f"track {self.track_id}: length and width must be > 0")
        if np.any(self.heading <= -np.pi) or np.any(self.heading > np.pi):
            raise TrackIntegrityError(f"track {self.track_id}: heading outside (-pi, pi]")
        if self.agent_class not in DEFAULT_SIZE:
            raise TrackIntegrityError(f"track {self.track_id}: unknown class {self.agent_class}")

    @property
    def first_frame(self) -> int:
        return int(self.frames[0])

    @property
    def last_frame(self) -> int:
        return int(self.frames[-1])

    def __len__(self) -> int:
        return len(self.frames)

    def covers(self, frame: int) -> bool:
        return self.first_frame <= frame <= self.last_frame

    def state_at(self, frame: int) -> TrackState:
        if not self.covers(frame):
            raise KeyError(f"track {self.track_id} has no state at frame {frame}")
        i = frame - self.first_frame
        return TrackState(self.track_id, int(frame), float(self.x[i]), float(self.y[i]),
                          float(self.vx[i]), float(self.vy[i]), float(self.heading[i]),
                          float(self.length[i]), float(self.width[i]), self.agent_class)

    def positions(self, start: int, stop: int) -> np.ndarray:
        """(x, y) rows for frames start..stop inclusive."""
        i, j = start - self.first_frame, stop - self.first_frame + 1
        return np.stack([self.x[i:j], self.y[i:j]], axis=1)

    def transformed(self, rotation: float, translation) -> Track:
        c, s = np.cos(rotation), np.sin(rotation)
        tx, ty = translation
        heading = self.heading + rotation
        heading = np.where(heading > np.pi, heading - 2 * np.pi, heading)
        heading = np.where(heading <= -np.pi, heading + 2 * np.pi, heading)
        return Track(self.track_id, self.frames, c * self.x - s * self.y + tx,
                     s * self.x + c * self.y + ty, c * self.vx - s * self.vy,
                     s * self.vx + c * self.vy, heading, self.length, self.width,
                     self.agent_class)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Track):
            return NotImplemented
        return (self.track_id == other.track_id and self.agent_class == other.agent_class
                and all(np.array_equal(getattr(self, k), getattr(other, k))
                        for k in ("frames", "x", "y", "vx", "vy", "heading", "length", "width")))


class TrackSet:
    """Tracks keyed by id, with a per-frame index for scene queries."""

    def __init__(self, tracks=(), frame_period: float = FRAME_PERIOD):
        self.tracks: dict = {}
        for t in tracks:
            if t.track_id in self.tracks:
                raise TrackIntegrityError(f"duplicate track id {t.track_id}")
            self.tracks[t.track_id] = t
        self.frame_period = frame_period
        self._by_frame = None

    def __len__(self) -> int:
        return len(self.tracks)

    def __iter__(self):
        return iter(self.tracks.values())

    def __getitem__(self, track_id) -> Track:
        return self.tracks[track_id]

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrackSet):
            return NotImplemented
        return self.frame_period == other.frame_period and self.tracks == other.tracks

    def states_at(self, frame: int) -> list:
        """All states at ``frame``, ordered by track id."""
        if self._by_frame is None:
            index: dict = {}
            for tid in sorted(self.tracks):
                t = self.tracks[tid]
                for f in range(t.first_frame, t.last_frame + 1):
                    index.setdefault(f, []).append(tid)
            self._by_frame = index
        return [self.tracks[tid].state_at(frame) for tid in self._by_frame.get(frame, [])]

    def transformed(self, rotation: float, translation) -> TrackSet:
        return TrackSet([t.transformed(rotation, translation) for t in self], self.frame_period)


@dataclass(frozen=True)
class SampleWindow:
    ego_id: int
    t0: int
    history_len: int = 10
    future_len: int = 30

    @property
    def first_frame(self) -> int:
        return self.t0 - self.history_len + 1

    @property
    def last_frame(self) -> int:
        return self.t0 + self.future_len


def window_samples(tracks: TrackSet, history_len: int = 10, future_len: int = 30,
                   stride: int = 1) -> list:
    """Enumerate windows per track (ascending id) whose span the track fully covers."""
    if history_len < 1 or future_len < 1 or stride < 1:
        raise ValueError("history_len, future_len and stride must be >= 1")
    out = []
    for tid in sorted(tracks.tracks):
        t = tracks[tid]
        for t0 in range(t.first_frame + history_len - 1, t.last_frame - future_len + 1, stride):
            out.append(SampleWindow(tid, t0, history_len, future_len))
    return out


# CSV

def _fmt(v: float) -> str:
    return repr(float(v))


def export_tracks(tracks: TrackSet, path=None) -> str:
    """Write the canonical CSV (rows by track id, then frame); returns the text."""
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for tid in sorted(tracks.tracks):
        t = tracks[tid]
        for i, f in enumerate(t.frames):
            buf.write(",".join([
                str(tid), str(int(f)), str(int(f) * FRAME_MS), t.agent_class,
                _fmt(t.x[i]), _fmt(t.y[i]), _fmt(t.vx[i]), _fmt(t.vy[i]),
                _fmt(t.heading[i]), _fmt(t.length[i]), _fmt(t.width[i]),
            ]) + "\n")
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def _wrap_heading(h: float) -> float:
    if -np.pi < h <= np.pi:
        return h
    h = (h + np.pi) % (2 * np.pi) - np.pi
    return np.pi if h == -np.pi else h


def load_tracks(path, format: str = "csv") -> TrackSet:
    """Parse an INTERACTION-style CSV into a 10 Hz TrackSet.

    Rows may interleave tracks, but each track's rows must have strictly
    increasing timestamps. Data sampled at another rate is linearly
    resampled onto the 100 ms grid.
    """
    if format != "csv":
        raise ValueError(f"unsupported track format {format!r}")
    with open(path, newline="") as fh:
        return _parse_csv(fh)


def _parse_csv(fh) -> TrackSet:
    reader = csv.reader(fh)
    header = None
    rows: dict = {}
    for lineno, row in enumerate(reader, start=1):
        if not row or row[0].startswith("#"):
            continue
        if header is None:
            header = [h.strip() for h in row]
            missing = [c for c in CSV_COLUMNS if c not in header and c != "timestamp_ms"]
            if missing:
                raise TrackParseError(lineno, f"missing columns {missing}")
            col = {name: header.index(name) for name in header}
            continue
        if len(row) != len(header):
            raise TrackParseError(lineno, f"expected {len(header)} fields, got {len(row)}")
        try:
            tid = int(row[col["track_id"]])
            frame = int(row[col["frame_id"]])
            ts = int(row[col["timestamp_ms"]]) if "timestamp_ms" in col else frame * FRAME_MS
            raw_type = row[col["agent_type"]].strip()
            x, y = float(row[col["x"]]), float(row[col["y"]])
            vx, vy = float(row[col["vx"]]), float(row[col["vy"]])
            psi_s, len_s, wid_s = (row[col[c]].strip() for c in ("psi_rad", "length", "width"))
        except ValueError as exc:
            raise TrackParseError(lineno, str(exc)) from None
        agent = AGENT_ALIASES.get(raw_type.lower())
        if agent is None:
            log.warning("line %d: unknown agent_type %r mapped to car", lineno, raw_type)
            agent = "car"
        try:
            psi = float(psi_s) if psi_s else float(np.arctan2(vy, vx))
            length = float(len_s) if len_s else DEFAULT_SIZE[agent][0]
            width = float(wid_s) if wid_s else DEFAULT_SIZE[agent][1]
        except ValueError as exc:
            raise TrackParseError(lineno, str(exc)) from None
        entry = rows.setdefault(tid, {"agent": agent, "data": []})
        if entry["data"] and ts <= entry["data"][-1][1]:
            raise TrackIntegrityError(f"line {lineno}: track {tid} timestamps not increasing")
        entry["data"].append((frame, ts, x, y, vx, vy, _wrap_heading(psi), length, width))
    if header is None:
        raise TrackParseError(1, "empty file")
    tracks = []
    for tid in sorted(rows):
        data = np.array(rows[tid]["data"], dtype=np.float64)
        tracks.append(_make_track(tid, rows[tid]["agent"], data))
    return TrackSet(tracks)


def _make_track(tid: int, agent: str, data: np.ndarray) -> Track:
    frames, ts = data[:, 0].astype(np.int64), data[:, 1]
    dts = np.diff(ts)
    if len(ts) < 2 or np.all(dts == FRAME_MS):
        return Track(tid, frames, *data[:, 2:].T, agent_class=agent)
    grid = np.arange(np.ceil(ts[0] / FRAME_MS), np.floor(ts[-1] / FRAME_MS) + 1) * FRAME_MS
    if len(grid) == 0:
        raise TrackIntegrityError(f"track {tid}: shorter than one 10 Hz frame")
    cols = [np.interp(grid, ts, data[:, k]) for k in range(2, 6)]
    heading = np.interp(grid, ts, np.unwrap(data[:, 6]))
    heading = np.array([_wrap_heading(h) for h in heading])
    length = np.interp(grid, ts, data[:, 7])
    width = np.interp(grid, ts, data[:, 8])
    return Track(tid, (grid // FRAME_MS).astype(np.int64), *cols, heading, length, width,
                 agent_class=agent)

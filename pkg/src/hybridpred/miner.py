"""Score scenes by graph attention, relate it to path curvature, and rank them."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dataset import collate
from .metrics import ade, fde
from .model import HybridModel, combine, integrate_trajectory

MIN_SEGMENT = 0.05


class UndefinedCorrelationError(ValueError):
    pass


@dataclass(frozen=True)
class SceneScore:
    sample_id: str
    alpha_g: float
    alpha_i: float
    curvature: float          # ground-truth future path
    predicted_curvature: float
    ade: float
    fde: float
    family: str | None = None


@dataclass
class AttentionSweep:
    sample_id: str
    alphas: np.ndarray        # (n,) graph weights, 1 -> 0
    positions: np.ndarray     # (n, F, 2) world positions, first mode


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def normalized_curvature(path) -> float:
    """|total signed heading change| / pi, clamped to [0, 1]; 0 straight, 1 a U-turn.

    Points closer than MIN_SEGMENT to the previous kept point are dropped.
    Chord headings miss half a chord's turn at each end, so the end tangents
    come from the circle through the first (last) three kept points, which
    is exact for circular arcs at any spacing.
    """
    p = np.asarray(path, dtype=np.float64)
    if p.ndim != 2 or len(p) < 3:
        raise ValueError("normalized_curvature needs at least 3 points")
    kept = [p[0]]
    for q in p[1:]:
        if np.hypot(*(q - kept[-1])) >= MIN_SEGMENT:
            kept.append(q)
    if len(kept) < 3:
        return 0.0
    k = np.array(kept)
    heading = lambda i, j: np.arctan2(k[j, 1] - k[i, 1], k[j, 0] - k[i, 0])
    d = np.diff(k, axis=0)
    total = _wrap(np.diff(np.arctan2(d[:, 1], d[:, 0]))).sum()
    total += _wrap(heading(1, 2) - heading(0, 2))
    total += _wrap(heading(-3, -1) - heading(-3, -2))
    return float(min(1.0, abs(total) / np.pi))


def pearson(xs, ys) -> float:
    x, y = np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ValueError("pearson needs two equal-length sequences of length >= 2")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("correlation undefined for zero variance")
    return float(np.clip((dx @ dy) / np.sqrt(sxx * syy), -1.0, 1.0))


def histogram(values, bin_width: float = 0.02, value_range=(0.1, 0.9)) -> tuple:
    """Relative frequencies over equal bins; returns (edges, frequencies).

    Values outside the range are ignored; the upper edge is inclusive.
    """
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    lo, hi = value_range
    n_bins = int(round((hi - lo) / bin_width))
    edges = lo + bin_width * np.arange(n_bins + 1)
    counts = np.zeros(n_bins)
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    v = v[(v >= lo) & (v <= hi)]
    if len(v):
        # small nudge keeps values that sit exactly on an edge in the upper bin
        idx = np.floor((v - lo) / bin_width + 1e-9).astype(np.int64)
        np.add.at(counts, np.clip(idx, 0, n_bins - 1), 1.0)
        counts /= len(v)
    return edges, counts


def score_dataset(model: HybridModel, samples, batch_size: int = 64) -> list:
    scores = []
    for i in range(0, len(samples), batch_size):
        chunk = samples[i:i + batch_size]
        out = model.forward(collate(chunk))
        for s, pred, ag, ai in zip(chunk, out["pred"].data, out["alpha_g"].data[:, 0],
                                   out["alpha_i"].data[:, 0]):
            positions = [integrate_trajectory(p, s.start_pose) for p in pred]
            start = np.array(s.start_pose[:2])
            best = int(np.argmin([ade(p, s.truth_positions) for p in positions]))
            scores.append(SceneScore(
                sample_id=s.sample_id, alpha_g=float(ag), alpha_i=float(ai),
                curvature=normalized_curvature(np.vstack([start, s.truth_positions])),
                predicted_curvature=normalized_curvature(np.vstack([start, positions[best]])),
                ade=ade(positions[best], s.truth_positions),
                fde=min(fde(p, s.truth_positions) for p in positions),
                family=s.family,
            ))
    return scores


def attention_sweep(model: HybridModel, sample, n: int = 50) -> AttentionSweep:
    """Decode with alpha_g on a uniform grid from 1 (graph only) to 0 (image only)."""
    batch = collate([sample])
    out = model.forward(batch)
    eps_g, eps_i = out["eps_g"], out["eps_i"]
    alphas = np.linspace(1.0, 0.0, n)
    positions = []
    for a in alphas:
        pred = model.decode(combine(a, eps_g, 1.0 - a, eps_i)).data[0, 0]
        positions.append(integrate_trajectory(pred, sample.start_pose))
    return AttentionSweep(sample.sample_id, alphas, np.array(positions))


def rank_scenarios(scores, top_k: int | None = None, order: str = "most_interactive") -> list:
    """Stable sort by alpha_g (descending for most_interactive), ties by sample id."""
    if order not in ("most_interactive", "least_interactive"):
        raise ValueError(f"unknown order {order!r}")
    sign = -1.0 if order == "most_interactive" else 1.0
    ranked = sorted(scores, key=lambda s: (sign * s.alpha_g, s.sample_id))
    return ranked if top_k is None else ranked[:top_k]


SCORE_COLUMNS = ("sample_id", "family", "alpha_g", "alpha_i", "curvature",
                 "predicted_curvature", "ade", "fde")


def write_scores(scores, path, header_comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCORE_COLUMNS)
        for s in scores:
            w.writerow([s.sample_id, s.family or "", *(repr(float(v)) for v in (
                s.alpha_g, s.alpha_i, s.curvature, s.predicted_curvature, s.ade, s.fde))])


def read_scores(path) -> list:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    header, body = rows[0], rows[1:]
    col = {name: header.index(name) for name in SCORE_COLUMNS}
    return [SceneScore(r[col["sample_id"]], float(r[col["alpha_g"]]), float(r[col["alpha_i"]]),
                       float(r[col["curvature"]]), float(r[col["predicted_curvature"]]),
                       float(r[col["ade"]]), float(r[col["fde"]]), r[col["family"]] or None)
            for r in body]

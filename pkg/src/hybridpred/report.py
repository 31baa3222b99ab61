"""Deterministic SVG figures: attention histogram, attention/curvature scatter, sweep fans."""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .miner import histogram  # noqa: E402

GRAPH_COLOR = np.array([0.0, 0.7, 0.0])
IMAGE_COLOR = np.array([0.0, 0.2, 1.0])


def _svg(fig, path, tag: str | None) -> bytes:
    buf = io.BytesIO()
    with matplotlib.rc_context({"svg.hashsalt": "hybridpred", "svg.fonttype": "none"}):
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None,
                                                 "Description": tag})
    plt.close(fig)
    data = buf.getvalue()
    if path is not None:
        with open(path, "wb") as fh:
            fh.write(data)
    return data


def histogram_svg(alphas, path=None, tag: str | None = None, bin_width: float = 0.02) -> bytes:
    edges, freq = histogram(alphas, bin_width)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(edges[:-1], freq, width=bin_width, align="edge", color="0.4", edgecolor="white")
    for bound in (0.1, 0.9):
        ax.axvline(bound, color="red", linewidth=1.5)
    ax.set_xlim(0.0, 1.0)
    ax.set_xlabel("graph attention")
    ax.set_ylabel("relative frequency")
    return _svg(fig, path, tag)


def scatter_svg(alphas, curvatures, path=None, tag: str | None = None) -> bytes:
    fig, ax = plt.subplots(figsize=(4.5, 4))
    ax.scatter(alphas, curvatures, s=6, color="0.2")
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(-0.02, 1.02)
    ax.set_xlabel("graph attention")
    ax.set_ylabel("normalized curvature")
    return _svg(fig, path, tag)


def sweep_svg(sweep, truth=None, start=None, path=None, tag: str | None = None) -> bytes:
    """Fan of decoded trajectories, green (graph only) through blue (image only)."""
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.set_facecolor("black")
    for a, pos in zip(sweep.alphas, sweep.positions):
        color = a * GRAPH_COLOR + (1.0 - a) * IMAGE_COLOR
        pts = pos if start is None else np.vstack([start, pos])
        ax.plot(pts[:, 0], pts[:, 1], color=color, linewidth=0.8)
    if truth is not None:
        pts = truth if start is None else np.vstack([start, truth])
        ax.plot(pts[:, 0], pts[:, 1], color="white", linewidth=1.5)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_title(sweep.sample_id)
    return _svg(fig, path, tag)

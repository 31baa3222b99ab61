"""Central-difference gradient verification."""

from __future__ import annotations

import numpy as np

from .ops import track_kinks
from .tensor import Tensor

KINK_MARGIN = 1e-3


def grad_check(f, x: Tensor, eps: float = 1e-5, rng: np.random.Generator | None = None,
               max_resamples: int = 20, resample_scale: float = 0.1) -> float:
    """Return the max per-coordinate relative error between analytic and numeric grads.

    ``f`` maps ``x`` to a scalar Tensor. The relative error of a coordinate is
    ``|a - n| / max(|a|, |n|, 1e-8)``. If a kinked op (leaky_relu, abs) sees an
    input within ``KINK_MARGIN`` of its kink, ``x`` is jittered with Gaussian
    noise and re-evaluated, up to ``max_resamples`` times. Inputs that are
    exactly zero are treated as constants and do not trigger resampling.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    x.requires_grad = True
    for _ in range(max_resamples):
        with track_kinks() as closest:
            f(x)
        if closest[0] >= KINK_MARGIN:
            break
        x.data += rng.normal(scale=resample_scale, size=x.shape)
    out = f(x)
    x.grad = None
    out.backward()
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()

    numeric = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    nflat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = f(x).item()
        flat[i] = orig - eps
        down = f(x).item()
        flat[i] = orig
        nflat[i] = (up - down) / (2.0 * eps)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))

"""Small builders shared by several test modules."""

import numpy as np

from hybridpred.data_io import SampleWindow, Track, TrackSet
from hybridpred.dataset import build_sample, collate
from hybridpred.lane_geometry import Lane, LaneMap
from hybridpred.model import ModelConfig
from hybridpred.raster import RasterConfig


def straight_track(track_id, x0, y0, vx, vy, n, first_frame=0, agent="car", length=4.0, width=2.0):
    frames = np.arange(first_frame, first_frame + n)
    k = np.arange(n)
    x, y = x0 + vx * 0.1 * k, y0 + vy * 0.1 * k
    heading = np.full(n, np.arctan2(vy, vx) if (vx or vy) else 0.0)
    return Track(track_id, frames, x, y, np.full(n, vx), np.full(n, vy), heading,
                 np.full(n, length), np.full(n, width), agent)


def two_lane_map(length=200.0, width=3.5):
    right = Lane(0, [[0.0, 0.0], [length, 0.0]], width)
    left = Lane(1, [[0.0, width], [length, width]], width)
    return LaneMap([right, left], adjacent_left=[(0, 1)])


MICRO_MODEL = ModelConfig(resolution=8, history_len=2, future_len=3, embed=6, edge_hidden=4,
                          node_hidden=6, scorer_hidden=4, decoder_hidden=8, cnn_channels=(2, 3),
                          seed=3)
MICRO_RASTER = RasterConfig(resolution=8, pixel_size=2.0, history_states=2)


def micro_batch(cfg=MICRO_MODEL):
    """Two vehicles on a two-lane road: one in front of the ego, one beside it."""
    lane_map = two_lane_map()
    tracks = TrackSet([
        straight_track(1, 10.0, 0.0, 1.2, 0.0, 8),
        straight_track(2, 16.0, 0.0, 0.8, 0.0, 8),
        straight_track(3, 11.0, 3.5, 1.0, 0.0, 8, agent="truck"),
    ])
    samples = [build_sample(lane_map, tracks, SampleWindow(ego, 2, cfg.history_len, cfg.future_len),
                            MICRO_RASTER) for ego in (1, 3)]
    return collate(samples), samples


def directional_loss(model, batch, n_directions, rng, scale=0.05):
    """Full-model loss as a function of coefficients x along random parameter directions.

    theta = theta0 + sum_j x_j V_j. Each coordinate of the gradient in x is a
    directional derivative that mixes every parameter of the model, so a
    central-difference check on x exercises the whole backward pass while the
    compared quantities stay far from the roundoff floor.
    """
    from hybridpred.autodiff.tensor import make_node
    from hybridpred.model import batch_loss

    params = model.parameters()
    theta0 = [p.data.copy() for p in params]
    dirs = [rng.normal(scale=scale, size=(n_directions,) + p.shape) for p in params]

    def f(x):
        for p, t0, v in zip(params, theta0, dirs):
            p.data[...] = t0 + np.tensordot(x.data, v, axes=1)
            p.grad = None
        loss = batch_loss(model, batch)

        def back(g):
            loss.backward()
            gx = sum(np.tensordot(v, p.grad, axes=p.ndim)
                     for p, v in zip(params, dirs) if p.grad is not None)
            x._accumulate(g * gx)

        return make_node(loss.data, (x,), back)

    return f


def perturbed_model(cfg, seed, scale=0.05):
    """Micro model with every parameter (biases included) moved off its init."""
    from dataclasses import replace
    from hybridpred.model import HybridModel

    model = HybridModel(replace(cfg, seed=seed))
    rng = np.random.default_rng(1000 + seed)
    for p in model.parameters():
        p.data += rng.normal(scale=scale, size=p.shape)
    return model


def ecc_gradient_error(seed, cfg=MICRO_MODEL):
    """Worst grad_check error of the edge-conditioned convolution w.r.t. each of its parameters."""
    from hybridpred import autodiff as ad
    from hybridpred.autodiff import grad_check

    model = perturbed_model(cfg, seed)
    layer = model.graph
    batch, _ = micro_batch(cfg)
    rng = np.random.default_rng(seed)
    probe = rng.normal(size=(batch.ego_rows.size, 5))
    own = [layer.root, layer.root_bias, *layer.edge_mlp.parameters()]
    f = lambda _: ad.sum_(ad.mul(layer.convolve(batch), probe))
    return max(grad_check(f, p, rng=rng) for p in own)

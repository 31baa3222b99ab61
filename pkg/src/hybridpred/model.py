"""Hybrid graph/image trajectory predictor with bounded attention fusion."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import MLP, Conv2d, GRUCell, Linear, Module, Parameter, Tensor
from .dataset import Batch, collate
from .raster import RasterImage
from .scene_graph import EDGE_WIDTH, NODE_WIDTH

ALPHA_MIN, ALPHA_MAX = 0.1, 0.9
VGG16_LAYOUT = (64, 64, "M", 128, 128, "M", 256, 256, 256, "M",
                512, 512, 512, "M", 512, 512, 512, "M")


class ModelConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    resolution: int = 96
    history_len: int = 10
    future_len: int = 30
    modes: int = 1
    embed: int = 128
    edge_hidden: int = 32
    node_hidden: int = 128
    gru_layers: int = 2
    backbone: str = "small"
    cnn_channels: tuple = (8, 16, 32, 64)
    scorer_hidden: int = 64
    decoder_hidden: int = 256
    slope: float = 0.01
    # fixed input scaling: node speed and edge distance columns
    speed_scale: float = 0.1
    distance_scale: float = 0.05
    # graph inputs are snapped to this grid so rigid motions give bit-equal embeddings
    graph_quantum: float = 2.0 ** -16
    seed: int = 0

    def to_json(self) -> dict:
        d = asdict(self)
        d["cnn_channels"] = list(self.cnn_channels)
        return d

    @classmethod
    def from_json(cls, obj: dict) -> ModelConfig:
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ModelConfigError(f"unknown model config keys {sorted(unknown)}")
        obj = dict(obj)
        if "cnn_channels" in obj:
            obj["cnn_channels"] = tuple(obj["cnn_channels"])
        return cls(**obj)


class GraphBranch(Module):
    """Edge-conditioned convolution on each snapshot, then a GRU over time."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.edge_mlp = MLP([EDGE_WIDTH, cfg.edge_hidden, NODE_WIDTH * NODE_WIDTH], rng, cfg.slope)
        self.root = Parameter(ad.glorot(rng, (NODE_WIDTH, NODE_WIDTH), NODE_WIDTH, NODE_WIDTH))
        self.root_bias = Parameter(np.zeros(NODE_WIDTH))
        self.post = MLP([NODE_WIDTH, cfg.node_hidden, cfg.embed], rng, cfg.slope, activate_last=True)
        self.gru = [GRUCell(cfg.embed, cfg.embed, rng) for _ in range(cfg.gru_layers)]
        self.cfg = cfg

    def _prepare(self, batch: Batch):
        cfg = self.cfg
        nodes = batch.node_features.copy()
        nodes[:, 0] *= cfg.speed_scale
        edges = batch.edge_features.copy()
        edges[:, 3:] *= cfg.distance_scale
        if cfg.graph_quantum:
            nodes = np.round(nodes / cfg.graph_quantum) * cfg.graph_quantum
            edges = np.round(edges / cfg.graph_quantum) * cfg.graph_quantum
        return nodes, edges

    def convolve(self, batch: Batch) -> Tensor:
        """Updated ego node features, shape (T * B, 5), rows ordered like ego_rows.ravel()."""
        nodes, edges = self._prepare(batch)
        x = Tensor(nodes)
        ego = batch.ego_rows.reshape(-1)
        out = ad.add(ad.matmul(ad.gather_rows(x, ego), ad.transpose(self.root)), self.root_bias)
        if len(batch.edge_source):
            theta = ad.reshape(self.edge_mlp(Tensor(edges)), (-1, NODE_WIDTH, NODE_WIDTH))
            xj = ad.reshape(ad.gather_rows(x, batch.edge_source), (-1, NODE_WIDTH, 1))
            msg = ad.reshape(ad.matmul(theta, xj), (-1, NODE_WIDTH))
            out = ad.add(out, ad.segment_mean(msg, batch.edge_target, len(ego)))
        return out

    def __call__(self, batch: Batch) -> Tensor:
        T, B = batch.ego_rows.shape
        per_step = ad.reshape(self.post(self.convolve(batch)), (T, B, self.cfg.embed))
        hidden = [Tensor(np.zeros((B, self.cfg.embed))) for _ in self.gru]
        for t in range(T):
            inp = per_step[t]
            for layer, cell in enumerate(self.gru):
                hidden[layer] = cell(inp, hidden[layer])
                inp = hidden[layer]
        return hidden[-1]


class ImageBranch(Module):
    """CNN backbone, global average pool, linear projection to the embedding width."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.blocks = []
        self.pools = []
        c_in = 3
        if cfg.backbone == "small":
            layout = cfg.cnn_channels
            for c_out in layout:
                self.blocks.append(Conv2d(c_in, c_out, 3, rng, stride=2, padding=1))
                self.pools.append(False)
                c_in = c_out
        elif cfg.backbone == "vgg16":
            for item in VGG16_LAYOUT:
                if item == "M":
                    self.pools[-1] = True
                    continue
                self.blocks.append(Conv2d(c_in, item, 3, rng, stride=1, padding=1))
                self.pools.append(False)
                c_in = item
        else:
            raise ModelConfigError(f"unknown backbone {cfg.backbone!r}")
        self.head = Linear(c_in, cfg.embed, rng)
        self.cfg = cfg

    def __call__(self, images) -> Tensor:
        x = images if isinstance(images, Tensor) else Tensor(images)
        for conv, pool in zip(self.blocks, self.pools):
            x = ad.leaky_relu(conv(x), self.cfg.slope)
            if pool:
                x = ad.max_pool2d(x, 2)
        return self.head(ad.mean_over_axis(x, axis=(2, 3)))


class HybridModel(Module):
    def __init__(self, cfg: ModelConfig = ModelConfig()):
        rng = np.random.default_rng(cfg.seed)
        self.cfg = cfg
        self.graph = GraphBranch(cfg, rng)
        self.image = ImageBranch(cfg, rng)
        self.scorer = MLP([cfg.embed, cfg.scorer_hidden, 1], rng, cfg.slope)
        self.decoder = MLP([cfg.embed, cfg.decoder_hidden, cfg.modes * 2 * cfg.future_len],
                           rng, cfg.slope)

    def attend(self, eps_g: Tensor, eps_i: Tensor):
        """Normalize both embeddings and score them with shared weights.

        Returns ``(alpha_g, alpha_i, eps_g_normalized, eps_i_normalized)`` where
        ``alpha = 0.1 + 0.8 * softmax(logits)``.
        """
        ng, ni = ad.l2_normalize(eps_g, axis=-1), ad.l2_normalize(eps_i, axis=-1)
        logits = ad.concat([self.scorer(ng), self.scorer(ni)], axis=-1)
        alpha = ad.add(ALPHA_MIN, ad.mul(ALPHA_MAX - ALPHA_MIN, ad.softmax(logits, axis=-1)))
        return alpha[..., 0:1], alpha[..., 1:2], ng, ni

    def decode(self, eps_c: Tensor) -> Tensor:
        """(B, K, 2F) interleaved ego-frame velocity sequences."""
        out = self.decoder(eps_c)
        return ad.reshape(out, (eps_c.shape[0], self.cfg.modes, 2 * self.cfg.future_len))

    def forward(self, batch: Batch, alpha=None) -> dict:
        """Full forward pass; ``alpha=(a_g, a_i)`` replaces the learned attention."""
        if batch.images.shape[-1] != self.cfg.resolution:
            raise ModelConfigError(f"image resolution {batch.images.shape[-1]} != "
                                   f"configured {self.cfg.resolution}")
        eps_g = self.graph(batch)
        eps_i = self.image(batch.images)
        a_g, a_i, ng, ni = self.attend(eps_g, eps_i)
        if alpha is not None:
            a_g = Tensor(np.full((batch.size, 1), float(alpha[0])))
            a_i = Tensor(np.full((batch.size, 1), float(alpha[1])))
        eps_c = combine(a_g, ng, a_i, ni)
        return {"pred": self.decode(eps_c), "alpha_g": a_g, "alpha_i": a_i,
                "eps_g": ng, "eps_i": ni, "eps_c": eps_c}

    def graph_encode(self, graphs, ego_id) -> np.ndarray:
        """Embedding of one ego's snapshot history (unnormalized)."""
        from .dataset import Sample
        from .data_io import SampleWindow
        stub = Sample("", SampleWindow(ego_id, 0, len(graphs), self.cfg.future_len), list(graphs),
                      np.zeros((3, self.cfg.resolution, self.cfg.resolution), np.uint8),
                      np.zeros(2 * self.cfg.future_len), np.zeros((self.cfg.future_len, 2)),
                      (0.0, 0.0, 0.0), 0.0, 0.0, np.zeros(2))
        return self.graph(collate([stub])).data[0]

    def image_encode(self, image) -> np.ndarray:
        if isinstance(image, RasterImage):
            image = image.pixels.transpose(2, 0, 1)
        image = np.asarray(image)
        if image.shape != (3, self.cfg.resolution, self.cfg.resolution):
            raise ModelConfigError(f"image shape {image.shape} does not match resolution "
                                   f"{self.cfg.resolution}")
        return self.image(image[None].astype(np.float64) / 255.0).data[0]


def combine(alpha_g, eps_g, alpha_i, eps_i) -> Tensor:
    """Affine combination of the two embeddings."""
    return ad.add(ad.mul(alpha_g, eps_g), ad.mul(alpha_i, eps_i))


def trajectory_loss(pred: Tensor, truth) -> Tensor:
    """Per-sample L1 loss, minimum over modes; shape (B,).

    ``pred`` is (B, K, 2F) and ``truth`` (B, 2F).
    """
    truth = np.asarray(truth.data if isinstance(truth, Tensor) else truth, dtype=np.float64)
    if pred.shape[0] != truth.shape[0] or pred.shape[-1] != truth.shape[-1]:
        raise ad.ShapeError("trajectory_loss", pred.shape, truth.shape)
    per_mode = ad.abs_sum(ad.sub(pred, truth[:, None, :]), axis=-1)
    return ad.min_over_axis(per_mode, axis=-1)


def batch_loss(model: HybridModel, batch: Batch, alpha=None) -> Tensor:
    out = model.forward(batch, alpha)
    return ad.mean_over_axis(trajectory_loss(out["pred"], batch.targets))


def integrate_trajectory(velocities, start_pose, dt: float = 0.1) -> np.ndarray:
    """Ego-frame velocity sequence -> (F, 2) world positions after each step."""
    v = np.asarray(velocities, dtype=np.float64).reshape(-1, 2)
    x, y, heading = start_pose
    c, s = np.cos(heading), np.sin(heading)
    world = np.stack([c * v[:, 0] - s * v[:, 1], s * v[:, 0] + c * v[:, 1]], axis=1)
    return np.array([x, y]) + np.cumsum(world * dt, axis=0)


def save_model(model: HybridModel, directory, **metadata) -> None:
    meta = {"model_config": model.cfg.to_json()}
    meta.update(metadata)
    ad.save_checkpoint(directory, model.named_parameters(), meta)


def load_model(directory) -> tuple:
    manifest = ad.load_manifest(directory)
    model = HybridModel(ModelConfig.from_json(manifest["model_config"]))
    ad.load_checkpoint(directory, model.named_parameters())
    return model, manifest


def write_model_config(cfg: ModelConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(cfg.to_json(), fh, indent=2, sort_keys=True)

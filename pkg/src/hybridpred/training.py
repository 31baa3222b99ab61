"""Dataset splitting and the training loop with plateau learning-rate decay."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import Adam
from .dataset import collate
from .model import HybridModel, batch_loss, save_model

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    lr: float = 1e-4
    patience: int = 3
    decay: float = 0.1
    min_lr: float = 1e-7
    improvement: float = 1e-4
    max_epochs: int = 30
    fractions: tuple = (0.85, 0.05, 0.10)
    seed: int = 0
    alpha: tuple | None = None  # fixed (alpha_g, alpha_i) for ablations

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {self.fractions}")


def _half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_dataset(samples, fractions=(0.85, 0.05, 0.10), seed: int = 0):
    """Seeded shuffle into (train, val, holdout); rounding remainder goes to train."""
    samples = list(samples)
    if not samples:
        raise ValueError("cannot split an empty dataset")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must sum to 1, got {fractions}")
    n = len(samples)
    n_val, n_hold = _half_up(n * fractions[1]), _half_up(n * fractions[2])
    n_train = n - n_val - n_hold
    if n_val == 0 or n_hold == 0:
        log.warning("split of %d samples leaves an empty validation or holdout set", n)
    order = np.random.default_rng(seed).permutation(n)
    pick = lambda idx: [samples[i] for i in idx]
    return (pick(order[:n_train]), pick(order[n_train:n_train + n_val]),
            pick(order[n_train + n_val:]))


@dataclass
class TrainResult:
    curves: list = field(default_factory=list)   # one dict per evaluation
    best_val: float = math.inf
    best_epoch: int = 0
    best_state: dict = field(default_factory=dict)
    steps: int = 0


def evaluate_loss(model: HybridModel, samples, batch_size: int = 64, alpha=None) -> float:
    if not samples:
        return math.nan
    total = 0.0
    for i in range(0, len(samples), batch_size):
        chunk = samples[i:i + batch_size]
        total += batch_loss(model, collate(chunk), alpha).item() * len(chunk)
    return total / len(samples)


class PlateauSchedule:
    """Divide the learning rate by ten after ``patience`` evaluations without progress."""

    def __init__(self, lr: float, patience: int = 3, decay: float = 0.1, improvement: float = 1e-4):
        self.lr = lr
        self.patience = patience
        self.decay = decay
        self.improvement = improvement
        self.best = math.inf
        self.stale = 0

    def update(self, value: float) -> bool:
        """Record one validation value; returns True if it is a new best."""
        if value < self.best - self.improvement:
            self.best = value
            self.stale = 0
            return True
        self.stale += 1
        if self.stale >= self.patience:
            self.lr *= self.decay
            self.stale = 0
        return False


def train(config: TrainConfig, train_set, val_set, model: HybridModel, out_dir=None,
          on_epoch=None) -> TrainResult:
    """Mini-batch Adam on the mean per-sample loss; keeps the best-validation weights."""
    config.validate()
    if not train_set:
        raise ValueError("training split is empty")
    params = model.named_parameters()
    opt = Adam([p for _, p in params], lr=config.lr)
    sched = PlateauSchedule(config.lr, config.patience, config.decay, config.improvement)
    rng = np.random.default_rng(config.seed)
    result = TrainResult()
    monitor = val_set if val_set else train_set

    initial = evaluate_loss(model, train_set, alpha=config.alpha)
    result.curves.append({"epoch": 0, "train_loss": initial,
                          "val_loss": evaluate_loss(model, monitor, alpha=config.alpha),
                          "lr": config.lr})
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_set))
        running, seen = 0.0, 0
        for i in range(0, len(order), config.batch_size):
            chunk = [train_set[j] for j in order[i:i + config.batch_size]]
            loss = batch_loss(model, collate(chunk), config.alpha)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDivergedError(f"loss became {value} at epoch {epoch}, step {result.steps}")
            opt.zero_grad()
            loss.backward()
            opt.lr = sched.lr
            opt.step()
            result.steps += 1
            running += value * len(chunk)
            seen += len(chunk)
        val = evaluate_loss(model, monitor, alpha=config.alpha)
        if not math.isfinite(val):
            raise TrainingDivergedError(f"validation loss became {val} at epoch {epoch}")
        lr_used = sched.lr
        if sched.update(val):
            result.best_val, result.best_epoch = val, epoch
            result.best_state = {n: p.data.copy() for n, p in params}
        result.curves.append({"epoch": epoch, "train_loss": running / seen, "val_loss": val,
                              "lr": lr_used})
        log.info("epoch %d train %.4f val %.4f lr %.1e", epoch, running / seen, val, lr_used)
        if on_epoch is not None:
            on_epoch(result.curves[-1])
        if sched.lr < config.min_lr:
            log.info("learning rate below %.0e, stopping", config.min_lr)
            break
    if result.best_state:
        for n, p in params:
            p.data[...] = result.best_state[n]
    if out_dir is not None:
        save_model(model, out_dir, step=result.steps, seed=config.seed,
                   train_config=_jsonable(asdict(config)), best_epoch=result.best_epoch,
                   best_val=result.best_val)
    return result


def _jsonable(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def write_curves(curves, path, header_comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "val_loss", "lr"],
                                lineterminator="\n")
        writer.writeheader()
        for row in curves:
            writer.writerow({k: repr(float(v)) if isinstance(v, float) else v for k, v in row.items()})

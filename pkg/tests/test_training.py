import logging
import math

import numpy as np
import pytest
from helpers import MICRO_MODEL, micro_batch
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridpred.dataset import build_samples
from hybridpred.model import HybridModel, ModelConfig, load_model
from hybridpred.raster import RasterConfig
from hybridpred.synth import SynthConfig, generate_synthetic
from hybridpred.training import (
    PlateauSchedule, TrainConfig, TrainingDivergedError, evaluate_loss, split_dataset, train,
    write_curves,
)

SMALL = ModelConfig(resolution=32, embed=16, edge_hidden=8, node_hidden=16, scorer_hidden=8,
                    decoder_hidden=32, cnn_channels=(4, 8), seed=0)


@pytest.fixture(scope="module")
def follow_brake_500():
    lane_map, ts = generate_synthetic(SynthConfig("follow_brake", 6, seed=0))
    samples = build_samples(lane_map, ts, RasterConfig(resolution=32, pixel_size=1.0), stride=3)
    assert len(samples) >= 500
    return samples[:500]


@pytest.fixture(scope="module")
def micro_samples():
    return micro_batch()[1]


# -- splitting

def test_split_100():
    tr, va, ho = split_dataset(range(100), seed=0)
    assert (len(tr), len(va), len(ho)) == (85, 5, 10)
    assert sorted(tr + va + ho) == list(range(100))


def test_split_3_warns(caplog):
    with caplog.at_level(logging.WARNING):
        parts = split_dataset(range(3), seed=0)
    assert tuple(map(len, parts)) == (3, 0, 0)
    assert "empty" in caplog.text


def test_split_seeded():
    assert split_dataset(range(50), seed=4) == split_dataset(range(50), seed=4)
    assert split_dataset(range(50), seed=4) != split_dataset(range(50), seed=5)


def test_split_errors():
    with pytest.raises(ValueError):
        split_dataset([], seed=0)
    with pytest.raises(ValueError):
        split_dataset(range(10), (0.5, 0.5, 0.5))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 400), st.integers(0, 2**31))
def test_split_disjoint_cover(n, seed):
    tr, va, ho = split_dataset(range(n), seed=seed)
    assert sorted(tr + va + ho) == list(range(n))
    assert len(va) == math.floor(0.05 * n + 0.5) and len(ho) == math.floor(0.10 * n + 0.5)


# -- schedule

def test_plateau_drops_one_decade():
    s = PlateauSchedule(1e-3, patience=3)
    assert s.update(1.0)
    assert not s.update(1.0) and not s.update(0.99995)
    assert s.lr == 1e-3
    assert not s.update(1.2)
    assert s.lr == pytest.approx(1e-4)
    for _ in range(2):
        s.update(5.0)
    assert s.lr == pytest.approx(1e-4)
    assert s.update(0.5) and s.lr == pytest.approx(1e-4)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0).validate()
    with pytest.raises(ValueError):
        TrainConfig(fractions=(0.9, 0.2, 0.0)).validate()
    assert TrainConfig().lr == 1e-4 and TrainConfig().batch_size == 16


# -- loop

def test_learning_happens(follow_brake_500):
    res = train(TrainConfig(lr=1e-3, max_epochs=20, seed=0), follow_brake_500,
                follow_brake_500[:50], HybridModel(SMALL))
    assert res.curves[-1]["train_loss"] < 0.5 * res.curves[0]["train_loss"]


def test_same_seed_same_curves(micro_samples):
    runs = [train(TrainConfig(lr=1e-2, max_epochs=4, batch_size=1, seed=2), micro_samples,
                  micro_samples[:1], HybridModel(MICRO_MODEL)) for _ in range(2)]
    assert runs[0].curves == runs[1].curves


def test_best_checkpoint_is_the_minimum(micro_samples, tmp_path):
    model = HybridModel(MICRO_MODEL)
    res = train(TrainConfig(lr=3e-2, max_epochs=12, batch_size=1, seed=1), micro_samples,
                micro_samples[1:], model, out_dir=tmp_path / "ckpt")
    vals = [c["val_loss"] for c in res.curves[1:]]
    assert res.best_val == min(vals)
    assert vals[res.best_epoch - 1] == res.best_val
    # the returned and saved weights are the best ones
    assert evaluate_loss(model, micro_samples[1:]) == res.best_val
    saved, manifest = load_model(tmp_path / "ckpt")
    assert evaluate_loss(saved, micro_samples[1:]) == res.best_val
    assert manifest["best_epoch"] == res.best_epoch


def test_lr_floor_stops_training(micro_samples):
    cfg = TrainConfig(lr=1e-6, max_epochs=50, batch_size=2, patience=1, seed=0, improvement=10.0)
    res = train(cfg, micro_samples, micro_samples, HybridModel(MICRO_MODEL))
    # epoch 1 sets the first best, each later epoch is stale and decays the rate
    assert [c["lr"] for c in res.curves[1:]] == pytest.approx([1e-6, 1e-6, 1e-7], rel=1e-12)


def test_divergence_aborts(micro_samples):
    model = HybridModel(MICRO_MODEL)
    model.parameters()[0].data[...] = np.nan
    with pytest.raises(TrainingDivergedError, match="epoch 1"):
        train(TrainConfig(max_epochs=2), micro_samples, micro_samples, model)


def test_empty_train_split(micro_samples):
    with pytest.raises(ValueError):
        train(TrainConfig(), [], micro_samples, HybridModel(MICRO_MODEL))


def test_curves_csv(tmp_path):
    write_curves([{"epoch": 0, "train_loss": 1.5, "val_loss": 2.0, "lr": 1e-4}], tmp_path / "c.csv",
                 header_comment="config_hash=q")
    assert (tmp_path / "c.csv").read_text() == "# config_hash=q\nepoch,train_loss,val_loss,lr\n0,1.5,2.0,0.0001\n"

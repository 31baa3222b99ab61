import json
import subprocess
import sys

import pytest

from hybridpred.cli import main
from hybridpred.config import PipelineConfig

SMALL = {
    "data": {"stride": 20},
    "raster": {"resolution": 32, "pixel_size": 1.0},
    "model": {"resolution": 32, "embed": 16, "edge_hidden": 8, "node_hidden": 16,
              "scorer_hidden": 8, "decoder_hidden": 32, "cnn_channels": [4, 8]},
    "train": {"max_epochs": 2, "lr": 1e-3},
    "miner": {"top_k": 5},
}


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "cfg.json"
    cfg.write_text(json.dumps(SMALL))
    data, ckpt, mined = root / "data", root / "ckpt", root / "mined"
    common = ("--config", cfg)
    assert run("synth", *common, "--family", "follow_brake", "--episodes", 50, "--seed", 7, "--out", data) == 0
    inputs = ("--tracks", data / "tracks.csv", "--map", data / "map.json")
    assert run("build-graphs", *common, *inputs, "--seed", 7, "--out", root / "graphs.jsonl") == 0
    assert run("rasterize", *common, *inputs, "--seed", 7, "--out-dir", root / "rasters") == 0
    assert run("train", *common, *inputs, "--seed", 7, "--graphs", root / "graphs.jsonl",
               "--rasters", root / "rasters", "--out", ckpt) == 0
    assert run("mine", *common, *inputs, "--seed", 7, "--ckpt", ckpt, "--out", mined) == 0
    return dict(root=root, cfg=cfg, data=data, ckpt=ckpt, mined=mined, inputs=inputs)


def test_smoke_pipeline_outputs(pipeline):
    mined = pipeline["mined"]
    for name in ("scores.csv", "ranked.csv", "histogram.svg", "scatter.svg", "summary.json"):
        assert (mined / name).exists()
    lines = (mined / "scores.csv").read_text().splitlines()
    assert lines[0].startswith("# config_hash=") and lines[1].startswith("sample_id,")
    assert len(lines) > 2
    assert len((mined / "ranked.csv").read_text().splitlines()) == 2 + 5
    assert "<svg" in (mined / "histogram.svg").read_text()


def test_artifacts_embed_config_hash(pipeline):
    root, data = pipeline["root"], pipeline["data"]
    assert (data / "tracks.csv").read_text().startswith("# config_hash=")
    first = json.loads((root / "graphs.jsonl").read_text().splitlines()[0])
    assert len(first["config_hash"]) == 64
    assert (root / "rasters" / "manifest.json").exists()
    ppm = next((root / "rasters").glob("*.ppm")).read_bytes()
    assert b"# config_hash=" in ppm[:100]
    manifest = json.loads((pipeline["ckpt"] / "manifest.json").read_text())
    assert len(manifest["config_hash"]) == 64
    assert (pipeline["ckpt"] / "curves.csv").read_text().startswith("# config_hash=")


def test_evaluate_and_sweep(pipeline):
    root = pipeline["root"]
    args = ("--config", pipeline["cfg"], *pipeline["inputs"], "--seed", 7, "--ckpt", pipeline["ckpt"])
    assert run("evaluate", *args, "--out", root / "eval.csv") == 0
    text = (root / "eval.csv").read_text().splitlines()
    assert "thresholds=lat=1.0m" in text[0]
    assert text[1] == "location,model,n,ade,fde,mr"
    assert any(r.startswith("total,hybrid,") for r in text)
    assert any(r.startswith("total,constant_velocity,") for r in text)
    assert run("sweep", *args, "--count", 1, "--n", 4, "--out", root / "sweeps") == 0
    csvs = list((root / "sweeps").glob("sweep_*.csv"))
    assert len(csvs) == 1 and len(list((root / "sweeps").glob("sweep_*.svg"))) == 1
    rows = csvs[0].read_text().splitlines()[2:]
    assert len(rows) == 4 * 30
    assert float(rows[0].split(",")[0]) == 1.0 and float(rows[-1].split(",")[0]) == 0.0


def test_report_is_deterministic(pipeline, tmp_path):
    scores = pipeline["mined"] / "scores.csv"
    assert run("report", "--scores", scores, "--out", tmp_path / "a") == 0
    assert run("report", "--scores", scores, "--out", tmp_path / "b") == 0
    for name in ("histogram.svg", "scatter.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_mismatched_hash_refused_unless_forced(pipeline, tmp_path, capsys):
    other = json.loads(json.dumps(SMALL))
    other["data"]["stride"] = 25
    cfg = tmp_path / "other.json"
    cfg.write_text(json.dumps(other))
    args = ("--config", cfg, *pipeline["inputs"], "--seed", 7, "--ckpt", pipeline["ckpt"])
    assert run("mine", *args, "--out", tmp_path / "m") == 1
    assert "--force" in capsys.readouterr().err
    graphs = pipeline["root"] / "graphs.jsonl"
    out = tmp_path / "g.csv"
    other["data"]["stride"] = 20
    other["data"]["seed"] = 99
    cfg.write_text(json.dumps(other))
    assert run("evaluate", "--config", cfg, *pipeline["inputs"], "--ckpt", pipeline["ckpt"],
               "--graphs", graphs, "--split", "all", "--out", out) == 1
    assert run("evaluate", "--config", cfg, *pipeline["inputs"], "--ckpt", pipeline["ckpt"],
               "--graphs", graphs, "--split", "all", "--force", "--out", out) == 0


def test_input_errors(tmp_path, capsys):
    assert run("evaluate", "--ckpt", tmp_path / "missing", "--out", tmp_path / "e.csv") == 1
    assert "--ckpt" in capsys.readouterr().err
    assert run("train", "--out", tmp_path / "c") == 1
    assert "--tracks" in capsys.readouterr().err
    assert run("report") == 1
    assert "--scores" in capsys.readouterr().err
    assert run("frobnicate") == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"model": {"wings": 2}}))
    assert run("synth", "--config", bad, "--out", tmp_path / "s") == 1
    assert "wings" in capsys.readouterr().err
    assert run("synth", "--episodes", "x", "--out", tmp_path / "s") == 1
    assert run("synth", "--family", "parade", "--out", tmp_path / "s") == 1
    (tmp_path / "s.csv").write_text("sample_id\n")
    assert run("report", "--scores", tmp_path / "s.csv") == 1


def test_internal_error_exit_code(monkeypatch, tmp_path):
    import hybridpred.cli as cli

    def boom(args, cfg):
        raise RuntimeError("boom")

    monkeypatch.setitem(cli.COMMANDS, "synth", boom)
    assert run("synth", "--out", tmp_path) == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hybridpred.cli", "evaluate", "--ckpt",
                           str(tmp_path / "nope"), "--out", str(tmp_path / "x.csv")],
                          capture_output=True, text=True)
    assert proc.returncode == 1 and proc.stdout == ""
    assert "--ckpt" in proc.stderr


def test_config_round_trip_and_hashes(tmp_path):
    cfg = PipelineConfig.from_json(SMALL)
    assert PipelineConfig.from_json(cfg.to_json()) == cfg
    assert cfg.hash("data") == PipelineConfig.from_json(cfg.to_json()).hash("data")
    assert cfg.hash("data") != cfg.with_section("data", stride=3).hash("data")
    assert cfg.hash("model") == cfg.with_section("data", stride=3).hash("model")

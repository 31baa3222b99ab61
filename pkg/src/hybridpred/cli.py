"""Command-line pipeline: synth, build-graphs, rasterize, train, evaluate, mine, sweep, report.

Stages compose through files. Every artifact carries the hash of the config
sections that produced it, and consumers refuse mismatched inputs unless
``--force`` is given. Exit codes: 0 success, 1 input error, 2 internal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .autodiff import CheckpointError
from .config import ConfigError, PipelineConfig, load_config
from .data_io import TrackIntegrityError, TrackParseError, export_tracks, load_tracks
from .lane_geometry import MapError, load_map
from .miner import (UndefinedCorrelationError, attention_sweep, normalized_curvature, pearson,
                    rank_scenarios, read_scores, score_dataset, write_scores)
from .model import HybridModel, load_model, save_model
from .pipeline import (atomic_write, cv_positions, metric_rows, predict_positions, prepare_samples,
                       render_rasters, sha256_file, synthesize, compute_graphs, windows_for,
                       write_json)
from .raster import RasterImage, RasterInputError
from .report import histogram_svg, scatter_svg, sweep_svg
from .scene_graph import read_graphs_jsonl, write_graphs_jsonl
from .synth import SynthConfigError
from .training import split_dataset, train, write_curves

log = logging.getLogger("hybridpred")

MANIFEST = "manifest.json"
FAMILIES_FILE = "families.json"
SPLIT_FILE = "split.json"
# config sections each artifact depends on
STAGE_SECTIONS = {
    "synth": ("data",),
    "build-graphs": ("data",),
    "rasterize": ("data", "raster"),
    "train": ("data", "raster", "model", "train"),
}


class InputError(Exception):
    """Bad or missing user input; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InputError(f"{self.prog}: {message}")


# hashes and manifests

def stage_hash(cfg: PipelineConfig, stage: str) -> str:
    return cfg.hash(*STAGE_SECTIONS[stage])


def _comment(cfg: PipelineConfig, stage: str) -> str:
    return f"config_hash={stage_hash(cfg, stage)} stage={stage}"


def check_hash(recorded: str | None, cfg: PipelineConfig, stage: str, what: str, force: bool) -> None:
    if recorded is None:
        return
    expected = stage_hash(cfg, stage)
    if recorded != expected:
        msg = (f"{what} was produced with config hash {recorded[:12]}, current {stage} "
               f"config hashes to {expected[:12]}")
        if not force:
            raise InputError(msg + " (use --force to override)")
        log.warning("%s; continuing because of --force", msg)


def check_digest(recorded: str | None, path, what: str, force: bool) -> None:
    if recorded is None or path is None:
        return
    actual = sha256_file(path)
    if recorded != actual:
        msg = f"{what} was built from a different {Path(path).name} than the one given"
        if not force:
            raise InputError(msg + " (use --force to override)")
        log.warning("%s; continuing because of --force", msg)


def _read_manifest(directory) -> dict:
    path = Path(directory) / MANIFEST
    return json.loads(path.read_text()) if path.exists() else {}


# input loading

def _require(path, flag: str) -> Path:
    if path is None:
        raise InputError(f"missing required flag {flag}")
    p = Path(path)
    if not p.exists():
        raise InputError(f"{flag} {p}: no such file or directory")
    return p


def _load_inputs(args, cfg: PipelineConfig):
    tracks_path = _require(args.tracks, "--tracks")
    map_path = _require(args.map, "--map")
    tracks, lane_map = load_tracks(tracks_path), load_map(map_path)
    family_of = None
    fam_path = Path(args.families) if getattr(args, "families", None) else \
        tracks_path.parent / FAMILIES_FILE
    if fam_path.exists():
        family_of = {int(k): v for k, v in json.loads(fam_path.read_text())["families"].items()}
    return tracks, lane_map, family_of, tracks_path, map_path


def _load_caches(args, cfg: PipelineConfig, tracks_path, map_path):
    graphs = images = None
    if getattr(args, "graphs", None):
        gpath = _require(args.graphs, "--graphs")
        side = json.loads(Path(str(gpath) + ".manifest.json").read_text()) \
            if Path(str(gpath) + ".manifest.json").exists() else {}
        check_hash(side.get("config_hash"), cfg, "build-graphs", str(gpath), args.force)
        check_digest(side.get("inputs", {}).get("tracks"), tracks_path, str(gpath), args.force)
        check_digest(side.get("inputs", {}).get("map"), map_path, str(gpath), args.force)
        graphs = read_graphs_jsonl(gpath)
    if getattr(args, "rasters", None):
        rdir = _require(args.rasters, "--rasters")
        manifest = _read_manifest(rdir)
        check_hash(manifest.get("config_hash"), cfg, "rasterize", str(rdir), args.force)
        check_digest(manifest.get("inputs", {}).get("tracks"), tracks_path, str(rdir), args.force)
        images = {}
        for w in windows_for(load_tracks(tracks_path), cfg):
            p = rdir / f"{w.ego_id}@{w.t0}.ppm"
            if p.exists():
                images[f"{w.ego_id}@{w.t0}"] = RasterImage.read_ppm(p).pixels.transpose(2, 0, 1).copy()
    return graphs, images


def _samples(args, cfg: PipelineConfig):
    tracks, lane_map, family_of, tracks_path, map_path = _load_inputs(args, cfg)
    graphs, images = _load_caches(args, cfg, tracks_path, map_path)
    samples = prepare_samples(lane_map, tracks, cfg, family_of, graphs, images, args.jobs)
    if not samples:
        raise InputError("no sample windows: tracks are shorter than history + future")
    return samples, tracks_path, map_path


def _load_ckpt(args, cfg: PipelineConfig):
    ckpt = _require(args.ckpt, "--ckpt")
    try:
        model, manifest = load_model(ckpt)
    except CheckpointError as exc:
        raise InputError(f"--ckpt {ckpt}: {exc}") from exc
    recorded = manifest.get("config_hashes", {})
    for section in ("data", "raster"):
        if section in recorded and recorded[section] != cfg.hash(section):
            msg = f"checkpoint {ckpt} was trained with a different {section!r} config section"
            if not args.force:
                raise InputError(msg + " (use --force to override)")
            log.warning("%s; continuing because of --force", msg)
    if model.cfg.resolution != cfg.raster.resolution:
        raise InputError(f"checkpoint resolution {model.cfg.resolution} != raster resolution "
                         f"{cfg.raster.resolution}")
    return model, manifest, ckpt


def _select_split(samples, ckpt: Path, manifest: dict, split: str, tracks_path, force: bool):
    if split == "all":
        return samples
    split_path = ckpt / SPLIT_FILE
    if not split_path.exists():
        raise InputError(f"{split_path} missing; use --split all")
    check_digest(manifest.get("inputs", {}).get("tracks"), tracks_path, f"checkpoint {ckpt}", force)
    wanted = json.loads(split_path.read_text())[split]
    by_id = {s.sample_id: s for s in samples}
    missing = [i for i in wanted if i not in by_id]
    if missing:
        raise InputError(f"{len(missing)} {split} samples of the checkpoint are not in the given tracks")
    return [by_id[i] for i in wanted]


# subcommands

def cmd_synth(args, cfg: PipelineConfig) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lane_map, tracks, family_of = synthesize(cfg)
    comment = _comment(cfg, "synth")
    atomic_write(out / "tracks.csv", f"# {comment}\n" + export_tracks(tracks))
    map_doc = lane_map.to_json()
    map_doc["config_hash"] = stage_hash(cfg, "synth")
    write_json(out / "map.json", map_doc)
    write_json(out / FAMILIES_FILE, {"config_hash": stage_hash(cfg, "synth"),
                                     "families": {str(k): v for k, v in sorted(family_of.items())}})
    write_json(out / MANIFEST, {"stage": "synth", "config_hash": stage_hash(cfg, "synth"),
                                "config": cfg.to_json(),
                                "files": ["tracks.csv", "map.json", FAMILIES_FILE]})
    log.info("wrote %d tracks in %d lanes to %s", len(tracks), len(lane_map.lanes), out)


def cmd_build_graphs(args, cfg: PipelineConfig) -> None:
    tracks, lane_map, _, tracks_path, map_path = _load_inputs(args, cfg)
    graphs = compute_graphs(lane_map, tracks, jobs=args.jobs)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = out.with_name(f".{out.name}.tmp")
    write_graphs_jsonl(graphs, tmp, extra={"config_hash": stage_hash(cfg, "build-graphs")})
    tmp.replace(out)
    write_json(Path(str(out) + ".manifest.json"), {
        "stage": "build-graphs", "config_hash": stage_hash(cfg, "build-graphs"),
        "inputs": {"tracks": sha256_file(tracks_path), "map": sha256_file(map_path)},
        "graphs": len(graphs)})
    log.info("wrote %d graphs to %s", len(graphs), out)


def cmd_rasterize(args, cfg: PipelineConfig) -> None:
    tracks, lane_map, _, tracks_path, map_path = _load_inputs(args, cfg)
    windows = windows_for(tracks, cfg)
    images = render_rasters(lane_map, tracks, windows, cfg.raster, args.jobs)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    comment = _comment(cfg, "rasterize")
    for sid, img in images.items():
        tmp = out / f".{sid}.ppm.tmp"
        RasterImage(img.transpose(1, 2, 0).copy()).write_ppm(tmp, comment)
        tmp.replace(out / f"{sid}.ppm")
    write_json(out / MANIFEST, {
        "stage": "rasterize", "config_hash": stage_hash(cfg, "rasterize"),
        "inputs": {"tracks": sha256_file(tracks_path), "map": sha256_file(map_path)},
        "images": sorted(images)})
    log.info("wrote %d rasters to %s", len(images), out)


def cmd_train(args, cfg: PipelineConfig) -> None:
    samples, tracks_path, map_path = _samples(args, cfg)
    tr, va, ho = split_dataset(samples, cfg.train.fractions, cfg.train.seed)
    log.info("split %d samples into %d/%d/%d", len(samples), len(tr), len(va), len(ho))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = HybridModel(cfg.model)
    result = train(cfg.train, tr, va, model)
    save_model(model, out, step=result.steps, seed=cfg.train.seed, best_epoch=result.best_epoch,
               best_val=result.best_val, config_hash=stage_hash(cfg, "train"),
               config_hashes={s: cfg.hash(s) for s in STAGE_SECTIONS["train"]},
               train_config=cfg.to_json()["train"],
               inputs={"tracks": sha256_file(tracks_path), "map": sha256_file(map_path)})
    tmp = out / ".curves.csv.tmp"
    write_curves(result.curves, tmp, _comment(cfg, "train"))
    tmp.replace(out / "curves.csv")
    write_json(out / SPLIT_FILE, {"train": [s.sample_id for s in tr],
                                  "val": [s.sample_id for s in va],
                                  "holdout": [s.sample_id for s in ho]})
    log.info("best validation loss %.4f at epoch %d; checkpoint in %s", result.best_val,
             result.best_epoch, out)


def cmd_evaluate(args, cfg: PipelineConfig) -> None:
    model, manifest, ckpt = _load_ckpt(args, cfg)
    samples, tracks_path, _ = _samples(args, cfg)
    samples = _select_split(samples, ckpt, manifest, args.split, tracks_path, args.force)
    preds, _ = predict_positions(model, samples)
    rows = metric_rows(samples, preds, cfg.metrics, "hybrid")
    rows += metric_rows(samples, cv_positions(samples), cfg.metrics, "constant_velocity")
    buf = io.StringIO()
    buf.write(f"# config_hash={manifest.get('config_hash', '')} "
              f"thresholds={cfg.metrics.describe()} split={args.split}\n")
    w = csv.DictWriter(buf, fieldnames=["location", "model", "n", "ade", "fde", "mr"],
                       lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(float(v)) if isinstance(v, float) else v for k, v in r.items()})
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    atomic_write(args.out, buf.getvalue())
    for r in rows:
        if r["location"] == "total":
            log.info("%s: ADE %.3f FDE %.3f MR %.3f (n=%d)", r["model"], r["ade"], r["fde"],
                     r["mr"], r["n"])


def _figures(scores, out: Path, tag: str, bin_width: float) -> None:
    alphas = [s.alpha_g for s in scores]
    atomic_write(out / "histogram.svg", histogram_svg(alphas, tag=tag, bin_width=bin_width))
    atomic_write(out / "scatter.svg", scatter_svg(alphas, [s.curvature for s in scores], tag=tag))


def _summary(scores) -> dict:
    alphas = np.array([s.alpha_g for s in scores])
    out = {"n": len(scores), "mean_alpha_g": float(alphas.mean())}
    for key, field_name in (("pearson_truth", "curvature"), ("pearson_predicted", "predicted_curvature")):
        try:
            out[key] = pearson(alphas, [getattr(s, field_name) for s in scores])
        except (UndefinedCorrelationError, ValueError):
            out[key] = None
    fams = sorted({s.family for s in scores if s.family})
    out["mean_alpha_g_by_family"] = {f: float(np.mean([s.alpha_g for s in scores if s.family == f]))
                                     for f in fams}
    return out


def cmd_mine(args, cfg: PipelineConfig) -> None:
    model, manifest, ckpt = _load_ckpt(args, cfg)
    samples, tracks_path, _ = _samples(args, cfg)
    samples = _select_split(samples, ckpt, manifest, args.split, tracks_path, args.force)
    scores = score_dataset(model, samples)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tag = f"config_hash={manifest.get('config_hash', '')}"
    for name, rows in (("scores.csv", scores),
                       ("ranked.csv", rank_scenarios(scores, cfg.miner.top_k, cfg.miner.order))):
        tmp = out / f".{name}.tmp"
        write_scores(rows, tmp, tag)
        tmp.replace(out / name)
    _figures(scores, out, tag, cfg.miner.bin_width)
    summary = _summary(scores)
    write_json(out / "summary.json", {"config_hash": manifest.get("config_hash"), **summary})
    log.info("scored %d samples; pearson(alpha_g, curvature) = %s", len(scores),
             summary["pearson_truth"])


def cmd_sweep(args, cfg: PipelineConfig) -> None:
    model, manifest, ckpt = _load_ckpt(args, cfg)
    samples, tracks_path, _ = _samples(args, cfg)
    samples = _select_split(samples, ckpt, manifest, args.split, tracks_path, args.force)
    by_id = {s.sample_id: s for s in samples}
    ids = args.sample or [s.sample_id for s in samples[:args.count]]
    unknown = [i for i in ids if i not in by_id]
    if unknown:
        raise InputError(f"--sample: unknown sample ids {unknown}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tag = f"config_hash={manifest.get('config_hash', '')}"
    for sid in ids:
        s = by_id[sid]
        sw = attention_sweep(model, s, args.n or cfg.miner.sweep_n)
        buf = io.StringIO()
        buf.write(f"# {tag} sample={sid}\n")
        buf.write("alpha_g,step,x,y,curvature\n")
        for a, pos in zip(sw.alphas, sw.positions):
            k = normalized_curvature(np.vstack([s.start_pose[:2], pos]))
            for j, (x, y) in enumerate(pos):
                buf.write(f"{float(a)!r},{j},{float(x)!r},{float(y)!r},{float(k)!r}\n")
        stem = sid.replace("@", "_")
        atomic_write(out / f"sweep_{stem}.csv", buf.getvalue())
        atomic_write(out / f"sweep_{stem}.svg",
                     sweep_svg(sw, s.truth_positions, np.array(s.start_pose[:2]), tag=tag))
    log.info("wrote %d sweeps to %s", len(ids), out)


def cmd_report(args, cfg: PipelineConfig) -> None:
    path = _require(args.scores, "--scores")
    with open(path) as fh:
        first = fh.readline().strip()
    tag = first[2:] if first.startswith("# ") else None
    try:
        scores = read_scores(path)
    except (ValueError, IndexError, KeyError) as exc:
        raise InputError(f"--scores {path}: malformed score table ({exc})") from exc
    if not scores:
        raise InputError(f"--scores {path}: no rows")
    out = Path(args.out) if args.out else path.parent
    out.mkdir(parents=True, exist_ok=True)
    _figures(scores, out, tag, cfg.miner.bin_width)
    log.info("wrote histogram.svg and scatter.svg to %s", out)


COMMANDS = {
    "synth": cmd_synth, "build-graphs": cmd_build_graphs, "rasterize": cmd_rasterize,
    "train": cmd_train, "evaluate": cmd_evaluate, "mine": cmd_mine, "sweep": cmd_sweep,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="pipeline config JSON")
    common.add_argument("--seed", type=int, help="overrides data, model and train seeds")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for graph/raster stages")
    common.add_argument("--force", action="store_true", help="accept inputs with mismatched config hashes")
    common.add_argument("--log-level", default="INFO")

    parser = _Parser(prog="hybridpred", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_args(p, caches=False):
        p.add_argument("--tracks", help="track CSV")
        p.add_argument("--map", help="map JSON")
        p.add_argument("--families", help="families.json (default: next to the tracks)")
        if caches:
            p.add_argument("--graphs", help="cached graphs from build-graphs")
            p.add_argument("--rasters", help="cached raster directory from rasterize")

    p = sub.add_parser("synth", parents=[common], help="generate synthetic scenarios")
    p.add_argument("--family", action="append", help="scenario family (repeatable or comma list)")
    p.add_argument("--episodes", help="episodes per family (one value or comma list)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("build-graphs", parents=[common], help="scene graphs for every frame")
    data_args(p)
    p.add_argument("--out", required=True, help="output JSON-lines file")

    p = sub.add_parser("rasterize", parents=[common], help="render one raster per sample window")
    data_args(p)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("train", parents=[common], help="train the hybrid model")
    data_args(p, caches=True)
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--epochs", type=int, help="overrides train.max_epochs")

    for name, help_ in (("evaluate", "ADE/FDE/MR table"), ("mine", "attention scores and figures"),
                        ("sweep", "attention sweeps for chosen samples")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--ckpt", required=True)
        data_args(p, caches=True)
        p.add_argument("--split", default="holdout", choices=["holdout", "val", "train", "all"])
        p.add_argument("--out", required=True)
        if name == "sweep":
            p.add_argument("--sample", action="append", help="sample id ego@t0 (repeatable)")
            p.add_argument("--count", type=int, default=3, help="samples when --sample is absent")
            p.add_argument("--n", type=int, help="trajectories per sweep")

    p = sub.add_parser("report", parents=[common], help="SVG figures from a score table")
    p.add_argument("--scores", required=True)
    p.add_argument("--out", help="output directory (default: next to the scores)")
    return parser


def resolve_config(args) -> PipelineConfig:
    cfg = load_config(_require(args.config, "--config")) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg = replace(cfg, data=replace(cfg.data, seed=args.seed),
                      model=replace(cfg.model, seed=args.seed),
                      train=replace(cfg.train, seed=args.seed))
    if args.command == "synth":
        if args.family:
            fams = tuple(f for item in args.family for f in item.split(",") if f)
            cfg = cfg.with_section("data", families=fams)
            if not args.episodes and len(cfg.data.episodes) != len(fams):
                cfg = cfg.with_section("data", episodes=(cfg.data.episodes[0],))
        if args.episodes:
            try:
                eps = tuple(int(e) for e in args.episodes.split(","))
            except ValueError:
                raise InputError(f"--episodes: expected integers, got {args.episodes!r}") from None
            cfg = cfg.with_section("data", episodes=eps)
    if args.command == "train" and args.epochs is not None:
        cfg = cfg.with_section("train", max_epochs=args.epochs)
    if args.jobs < 1:
        raise InputError("--jobs must be >= 1")
    cfg.check()
    return cfg


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        log.info("resolved config %s", json.dumps(cfg.to_json(), sort_keys=True))
        COMMANDS[args.command](args, cfg)
    except (InputError, ConfigError, SynthConfigError, MapError, TrackParseError,
            TrackIntegrityError, RasterInputError, CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

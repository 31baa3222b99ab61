"""
Training a small hybrid model and mining its attention
======================================================

A scaled-down run of the full pipeline: synthesize a mixed set, train a
reduced model for a few epochs, then score every holdout sample by its
graph attention and draw the histogram, the curvature scatter and one
attention sweep. The full-size run lives in the acceptance tests and takes
far longer; this one finishes in under a minute.
"""

import sys
from pathlib import Path

import numpy as np

from hybridpred.config import PipelineConfig
from hybridpred.miner import attention_sweep, pearson, rank_scenarios, score_dataset
from hybridpred.model import HybridModel
from hybridpred.pipeline import prepare_samples, synthesize
from hybridpred.report import histogram_svg, scatter_svg, sweep_svg
from hybridpred.training import split_dataset, train

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(exist_ok=True)

cfg = PipelineConfig.from_json({
    "data": {"episodes": [6, 6, 4, 4], "seed": 1, "stride": 5},
    "raster": {"resolution": 32, "pixel_size": 1.0},
    "model": {"resolution": 32, "embed": 16, "edge_hidden": 8, "node_hidden": 16,
              "scorer_hidden": 8, "decoder_hidden": 32, "cnn_channels": [4, 8]},
    "train": {"lr": 1e-3, "max_epochs": 8},
})

lane_map, tracks, family_of = synthesize(cfg)
samples = prepare_samples(lane_map, tracks, cfg, family_of)
tr, va, ho = split_dataset(samples, cfg.train.fractions, cfg.train.seed)
print(f"{len(samples)} samples -> {len(tr)} train / {len(va)} val / {len(ho)} holdout")

model = HybridModel(cfg.model)
result = train(cfg.train, tr, va, model,
               on_epoch=lambda c: print(f"epoch {c['epoch']:2d}  train {c['train_loss']:.2f}  val {c['val_loss']:.2f}"))

print(f"kept the weights of epoch {result.best_epoch} (validation loss {result.best_val:.2f})")

scores = score_dataset(model, ho)
alphas = [s.alpha_g for s in scores]
print("mean alpha_G by family:")
for fam in sorted({s.family for s in scores}):
    print(f"  {fam:12s} {np.mean([s.alpha_g for s in scores if s.family == fam]):.3f}")
print("pearson(alpha_G, curvature) =", round(pearson(alphas, [s.curvature for s in scores]), 3))
print("most interactive:", [s.sample_id for s in rank_scenarios(scores, 3)])

(out / "histogram.svg").write_bytes(histogram_svg(alphas))
(out / "scatter.svg").write_bytes(scatter_svg(alphas, [s.curvature for s in scores]))
s = next(x for x in ho if x.family == "lone_curve")
sweep = attention_sweep(model, s, n=20)
(out / "sweep.svg").write_bytes(sweep_svg(sweep, s.truth_positions, np.array(s.start_pose[:2])))
print("figures written to", out)

"""
From tracks to a scene graph and a raster
=========================================

Generate one crossing episode, turn a single frame into a semantic scene
graph, and render the ego-centred bird's-eye image for one sample window.
"""

import sys
from pathlib import Path

import numpy as np

from hybridpred.data_io import window_samples
from hybridpred.raster import RasterConfig, rasterize
from hybridpred.scene_graph import build_scene_graph
from hybridpred.synth import SynthConfig, generate_synthetic

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(exist_ok=True)

# two vehicles approach a crossing; the second one yields
lane_map, tracks = generate_synthetic(SynthConfig("crossing", 1, seed=3))
print("lanes:", sorted(lane_map.lanes), "crossing pairs:", lane_map.crossing_pairs)

frame = tracks[1].first_frame + 20
graph = build_scene_graph(lane_map, tracks.states_at(frame), t=frame)
print(f"frame {frame}: {len(graph.node_ids)} nodes, {len(graph.edges)} edges")

# edge columns: certainty of longitudinal, lateral, intersecting relation; path distance;
# distance to the intersection; centerline offsets of the two distance groups
np.set_printoptions(precision=2, suppress=True)
for (o, t), f in zip(graph.edges, graph.edge_features):
    print(f"  {o} -> {t}: {f}")

# the raster for the first sample window of vehicle 1
window = next(w for w in window_samples(tracks, 10, 30, 5) if w.ego_id == 1)
image = rasterize(lane_map, tracks, window, RasterConfig())
image.write_ppm(out / "crossing.ppm")
print("raster written to", out / "crossing.ppm", "non-black pixels:", int((image.pixels.sum(2) > 0).sum()))

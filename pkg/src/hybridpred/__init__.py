"""Hybrid graph/image trajectory prediction and attention-based scenario mining."""

from .config import PipelineConfig, load_config
from .data_io import SampleWindow, Track, TrackSet, TrackState, export_tracks, load_tracks, window_samples
from .dataset import Sample, build_samples, collate, constant_velocity
from .lane_geometry import FrenetCoord, Lane, LaneMap, ProjectionIdentity, load_map, save_map
from .metrics import MissRateThresholds, ade, fde, is_miss, miss_rate
from .miner import (AttentionSweep, SceneScore, attention_sweep, histogram, normalized_curvature,
                    pearson, rank_scenarios, score_dataset)
from .model import HybridModel, ModelConfig, integrate_trajectory, load_model, save_model
from .raster import RasterConfig, RasterImage, rasterize
from .scene_graph import SceneGraph, build_scene_graph
from .synth import SynthConfig, generate_mixed, generate_synthetic
from .training import TrainConfig, split_dataset, train

__version__ = "0.1.0"

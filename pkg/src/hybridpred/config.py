"""Pipeline configuration: one JSON file with per-module sections, plus content hashes."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace

from .metrics import MissRateThresholds
from .model import ModelConfig
from .raster import RasterConfig
from .synth import FAMILIES
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataConfig:
    families: tuple = FAMILIES
    episodes: tuple = (24, 40, 10, 10)   # per family, or one value for all
    seed: int = 0
    speed_range: tuple = (6.0, 14.0)
    gap_range: tuple = (12.0, 30.0)
    curve_radius_range: tuple = (15.0, 40.0)
    duration_s: float = 12.0
    history_len: int = 10
    future_len: int = 30
    stride: int = 5

    def episodes_for(self) -> list:
        if len(self.episodes) == 1:
            return list(self.episodes) * len(self.families)
        if len(self.episodes) != len(self.families):
            raise ConfigError(f"{len(self.episodes)} episode counts for {len(self.families)} families")
        return list(self.episodes)


@dataclass(frozen=True)
class MinerConfig:
    bin_width: float = 0.02
    sweep_n: int = 50
    top_k: int = 20
    order: str = "most_interactive"


SECTIONS = {
    "data": DataConfig,
    "raster": RasterConfig,
    "model": ModelConfig,
    "train": TrainConfig,
    "metrics": MissRateThresholds,
    "miner": MinerConfig,
}


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, list):
        return [_plain(v) for v in value]
    return value


def _section_json(obj) -> dict:
    return {k: _plain(v) for k, v in asdict(obj).items()}


def _section_from_json(cls, name: str, obj: dict):
    if not isinstance(obj, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(obj) - set(known))
    if unknown:
        raise ConfigError(f"unknown keys in section {name!r}: {unknown}")
    kwargs = {}
    for key, value in obj.items():
        if isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section {name!r}: {exc}") from exc


@dataclass(frozen=True)
class PipelineConfig:
    data: DataConfig = field(default_factory=DataConfig)
    raster: RasterConfig = field(default_factory=RasterConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    metrics: MissRateThresholds = field(default_factory=MissRateThresholds)
    miner: MinerConfig = field(default_factory=MinerConfig)

    def to_json(self) -> dict:
        return {name: _section_json(getattr(self, name)) for name in SECTIONS}

    @classmethod
    def from_json(cls, obj: dict) -> PipelineConfig:
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(obj) - set(SECTIONS))
        if unknown:
            raise ConfigError(f"unknown config sections: {unknown}")
        cfg = cls(**{name: _section_from_json(SECTIONS[name], name, obj[name]) for name in obj})
        cfg.check()
        return cfg

    def check(self) -> None:
        """Cross-section consistency."""
        if self.model.history_len != self.data.history_len or \
                self.model.future_len != self.data.future_len:
            raise ConfigError("model history_len/future_len must equal the data section's")
        if self.model.resolution != self.raster.resolution:
            raise ConfigError("model resolution must equal raster resolution")
        if self.raster.history_states > self.data.history_len:
            raise ConfigError("raster history_states exceeds data history_len")
        unknown = sorted(set(self.data.families) - set(FAMILIES))
        if unknown:
            raise ConfigError(f"unknown scenario families: {unknown}")
        self.data.episodes_for()
        try:
            self.train.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def with_section(self, name: str, **changes) -> PipelineConfig:
        return replace(self, **{name: replace(getattr(self, name), **changes)})

    def hash(self, *sections: str) -> str:
        """sha256 over canonical JSON of the named sections (all sections if none given)."""
        names = sections or tuple(SECTIONS)
        doc = self.to_json()
        payload = json.dumps({n: doc[n] for n in names}, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()


def load_config(path) -> PipelineConfig:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return PipelineConfig.from_json(obj)

"""Pipeline configuration: one structured document collecting every
tunable, with defaults, strict key checking, and load-time validation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .clustering import EncoderConfig
from .costmap import GridSpec
from .learning import TrainConfig
from .simworld import ExportParams


@dataclass
class ClusterConfig:
    k: int = 3
    pca_dims: int = 8
    restarts: int = 5

    def validate(self):
        if self.k < 2:
            raise ValueError("cluster k must be >= 2")
        if self.pca_dims < 1 or self.restarts < 1:
            raise ValueError("pca_dims and restarts must be >= 1")


@dataclass
class CostConfig:
    base_weights: list[float] = field(default_factory=lambda: [1.0, 2.0, 4.0])

    def validate(self):
        if any(w <= 0 for w in self.base_weights):
            raise ValueError("base_weights must be positive")


@dataclass
class PlannerConfig:
    unknown_cost: float = 0.5
    goal_weight: float = 1.0
    library_size: int = 15
    max_curvature: float = 0.5
    arc_length: float = 6.0
    ds: float = 0.1

    def validate(self):
        if not 0.0 <= self.unknown_cost <= 1.0:
            raise ValueError("unknown_cost must lie in [0, 1]")
        if self.goal_weight < 0:
            raise ValueError("goal_weight must be >= 0")
        if self.library_size < 1 or self.max_curvature < 0:
            raise ValueError("library_size must be >= 1 and max_curvature >= 0")
        if self.arc_length <= 0 or self.ds <= 0:
            raise ValueError("arc_length and ds must be positive")


@dataclass
class GridConfig:
    x_min: float = 0.0
    y_min: float = -4.0
    resolution: float = 0.1
    width: int = 80
    height: int = 80

    def validate(self):
        GridSpec(origin=(self.x_min, self.y_min), resolution=self.resolution,
                 width=self.width, height=self.height)

    def to_spec(self) -> GridSpec:
        return GridSpec(origin=(self.x_min, self.y_min), resolution=self.resolution,
                        width=self.width, height=self.height)


@dataclass
class SimConfig:
    speed: float = 1.0
    state_rate: float = 200.0
    image_rate: float = 5.0
    image_width: int = 960
    image_height: int = 768
    focal: float = 500.0
    camera_height: float = 1.0
    camera_pitch: float = 0.35

    def validate(self):
        if self.speed <= 0 or self.state_rate <= 0 or self.image_rate <= 0:
            raise ValueError("speed and rates must be positive")
        if self.image_rate > self.state_rate:
            raise ValueError("image_rate cannot exceed state_rate")
        if self.image_width < 1 or self.image_height < 1 or self.focal <= 0:
            raise ValueError("camera geometry must be positive")
        if self.camera_height <= 0 or not 0 < self.camera_pitch < 1.5:
            raise ValueError("camera mount out of range")


@dataclass
class PipelineConfig:
    seed: int = 0
    export: ExportParams = field(default_factory=ExportParams)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    cost: CostConfig = field(default_factory=CostConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    sim: SimConfig = field(default_factory=SimConfig)

    def validate(self) -> "PipelineConfig":
        if self.export.window < 1 or self.export.stride < 1:
            raise ValueError("window and stride must be >= 1")
        if self.export.max_footprints < 1 or self.export.heading_threshold < 0:
            raise ValueError("max_footprints must be >= 1 and heading_threshold >= 0")
        if self.export.patch_width < 3 or self.export.patch_height < 3:
            raise ValueError("patches must be at least 3x3 for texture features")
        if self.encoder.epochs < 1 or self.encoder.batch_size < 1:
            raise ValueError("encoder epochs and batch_size must be >= 1")
        for section in (self.cluster, self.cost, self.grid, self.planner, self.sim):
            section.validate()
        TrainConfig(**asdict(self.train))  # re-runs its own checks
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        cfg = cls()
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "seed" in doc:
            cfg.seed = int(doc["seed"])
        for f in fields(cls):
            if f.name == "seed" or f.name not in doc:
                continue
            section = getattr(cfg, f.name)
            sub = doc[f.name]
            if not isinstance(sub, dict):
                raise ValueError(f"config section {f.name!r} must be an object")
            section_fields = {sf.name for sf in fields(section)}
            bad = set(sub) - section_fields
            if bad:
                raise ValueError(f"unknown keys in config section {f.name!r}: {sorted(bad)}")
            for key, value in sub.items():
                setattr(section, key, value)
        return cfg.validate()

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

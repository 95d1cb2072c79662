"""Octomap-only baseline: the same active loop with the splat map removed."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .classes import TARGET_CLASS
from .config import BASELINE_METHODS, ExperimentConfig
from .geometry import ConfigError
from .metrics import MetricsReport
from .octomap import OctomapConfig, SemanticOctomap
from .scene import Scene


@dataclass(frozen=True)
class BaselineConfig:
    resolution: float = 0.01
    octomap: OctomapConfig = field(default_factory=OctomapConfig)

    def __post_init__(self):
        if self.resolution <= 0:
            raise ConfigError("resolution must be positive")

    @property
    def method(self) -> str:
        for name, res in BASELINE_METHODS.items():
            if res == self.resolution:
                return name
        raise ConfigError(f"no baseline method registered for resolution {self.resolution}")


def baseline_fruit_cloud(omap: SemanticOctomap, target_class: int = TARGET_CLASS) -> np.ndarray:
    """Centers of occupied voxels whose most likely class is the target."""
    return omap.occupied_centers(target_class)


def baseline_config(cfg: ExperimentConfig, bcfg: BaselineConfig) -> ExperimentConfig:
    return cfg.replace(method=bcfg.method, octomap=dataclasses.replace(bcfg.octomap))


def run_baseline(scene: Scene, cfg: ExperimentConfig, bcfg: BaselineConfig | None = None,
                 row_id: int = 0, seed: int = 0) -> MetricsReport:
    """Run the baseline on one row; ``cfg.method`` must name a baseline unless ``bcfg`` is given."""
    from .pipeline import run_row

    if bcfg is not None:
        cfg = baseline_config(cfg, bcfg)
    if cfg.is_hybrid:
        raise ConfigError("run_baseline needs an octomap-only method")
    return run_row(scene, row_id, cfg, seed).report

"""Experiment configuration: nested frozen dataclasses with JSON round-tripping."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field

from .geometry import CameraModel, ConfigError
from .metrics import EvalConfig
from .octomap import OctomapConfig
from .perception import NoiseConfig
from .planner.graph import PlannerConfig
from .planner.sampling import SamplingConfig
from .scene import SceneConfig
from .splat.densify import DensifyConfig
from .splat.loss import LossWeights
from .splat.optim import OptimConfig
from .targets import ClusterConfig

HYBRID = "hybrid"
BASELINE_METHODS = {"octomap-0.01": 0.01, "octomap-0.015": 0.015}
METHODS = (HYBRID, *BASELINE_METHODS)


@dataclass(frozen=True)
class ExperimentConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    method: str = HYBRID
    camera: CameraModel = field(default_factory=CameraModel)
    octomap: OctomapConfig = field(default_factory=OctomapConfig)
    waypoints_per_side: int = 4
    standoff: float = 0.5
    mount_height: float = 0.15
    canonical_distance: float = 0.4
    canonical_height: float = 0.38
    max_viewpoints_per_waypoint: int = 10
    max_rounds_per_waypoint: int = 6
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    densify: DensifyConfig = field(default_factory=DensifyConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    arm_steps: int = 5
    max_slide: float = 0.3
    reach_tol: float = 0.05
    robot_radius: float = 0.03
    gain_stride: int = 4
    use_confidence: bool = True
    exploration_only: bool = False
    seeds: tuple[int, ...] = (0,)
    rows: tuple[int, ...] = ()
    output_dir: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.waypoints_per_side < 1 or self.max_viewpoints_per_waypoint < 0:
            raise ConfigError("waypoint counts must be positive")
        if self.max_rounds_per_waypoint < 1:
            raise ConfigError("max_rounds_per_waypoint must be at least 1")
        if min(self.standoff, self.max_slide, self.reach_tol, self.gain_stride) <= 0:
            raise ConfigError("standoff, max_slide, reach_tol and gain_stride must be positive")
        if self.robot_radius < 0:
            raise ConfigError("robot_radius must be non-negative")
        if not self.seeds:
            raise ConfigError("at least one seed is required")

    @property
    def is_hybrid(self) -> bool:
        return self.method == HYBRID

    @property
    def label(self) -> str:
        """Method name including ablation switches, used as the report key."""
        tags = []
        if not self.use_confidence:
            tags.append("no-conf")
        if self.exploration_only:
            tags.append("explor-only")
        if self.densify.nontarget_keep_fraction >= 1.0 and self.is_hybrid:
            tags.append("no-downsample")
        return "+".join([self.method, *tags])

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def with_ablation(self, no_confidence=False, exploration_only=False, no_downsample=False) -> "ExperimentConfig":
        cfg = self
        if no_confidence:
            cfg = cfg.replace(use_confidence=False)
        if exploration_only:
            cfg = cfg.replace(exploration_only=True)
        if no_downsample:
            cfg = cfg.replace(densify=dataclasses.replace(cfg.densify, nontarget_keep_fraction=1.0))
        return cfg

    def to_dict(self) -> dict:
        return to_jsonable(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        return from_jsonable(cls, doc)

    def hash(self) -> str:
        """Stable digest of everything that affects results (output location excluded)."""
        doc = self.to_dict()
        doc.pop("output_dir", None)
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def to_jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [to_jsonable(x) for x in obj]
    if hasattr(obj, "item"):
        return obj.item()
    return obj


def _convert(tp, value):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if value is None:
        return None
    if dataclasses.is_dataclass(tp):
        return from_jsonable(tp, value)
    if origin is typing.Union or str(origin) == "types.UnionType":
        for a in args:
            if a is type(None):
                continue
            try:
                return _convert(a, value)
            except (TypeError, ValueError, ConfigError):
                continue
        raise ConfigError(f"cannot convert {value!r} to {tp}")
    if origin is tuple:
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_convert(args[0], v) for v in value)
        return tuple(_convert(a, v) for a, v in zip(args, value))
    if tp is float:
        return float(value)
    if tp is int:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"expected an integer, got {value!r}")
        return int(value)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"expected a boolean, got {value!r}")
        return value
    return value


def from_jsonable(cls, doc: dict):
    if not isinstance(doc, dict):
        raise ConfigError(f"expected an object for {cls.__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kw = {k: _convert(hints[k], v) for k, v in doc.items()}
    return cls(**kw)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return ExperimentConfig.from_dict(json.load(fh))


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")

"""Simulated semantic extractor: i.i.d. per-pixel label noise plus confidence."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classes import NUM_CLASSES, SemanticClass
from .geometry import CameraModel, ConfigError, invert_pose
from .scene import GroundTruthFrame

__all__ = ["NoiseConfig", "SemanticObservation", "SemanticClass", "corrupt_labels", "dump_observation"]


@dataclass(frozen=True)
class NoiseConfig:
    p_correct: float = 1.0
    conf_correct_range: tuple[float, float] = (0.7, 1.0)
    conf_wrong_range: tuple[float, float] = (0.2, 0.6)
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_correct <= 1.0:
            raise ConfigError("p_correct must lie in [0, 1]")
        for name in ("conf_correct_range", "conf_wrong_range"):
            lo, hi = getattr(self, name)
            if not 0.0 <= lo <= hi <= 1.0:
                raise ConfigError(f"{name} must satisfy 0 <= low <= high <= 1")
            object.__setattr__(self, name, (float(lo), float(hi)))


@dataclass
class SemanticObservation:
    color: np.ndarray
    depth: np.ndarray
    labels: np.ndarray
    confidence: np.ndarray
    w2c: np.ndarray
    camera: CameraModel

    @property
    def c2w(self) -> np.ndarray:
        return invert_pose(self.w2c)

    @property
    def valid(self) -> np.ndarray:
        return self.depth < self.camera.far

    def with_confidence(self, value: float) -> "SemanticObservation":
        return SemanticObservation(self.color, self.depth, self.labels,
                                   np.full_like(self.confidence, value), self.w2c, self.camera)


def corrupt_labels(frame: GroundTruthFrame, cfg: NoiseConfig, seed: int | None = None) -> SemanticObservation:
    """Keep each true label with probability ``p_correct``.

    A dropped label is replaced by one of the other classes chosen uniformly.
    Confidence is uniform in ``conf_correct_range`` for correct pixels and in
    ``conf_wrong_range`` otherwise; equal endpoints give a constant confidence.
    ``seed`` overrides ``cfg.rng_seed`` so a run can draw independent frames.
    """
    rng = np.random.default_rng(cfg.rng_seed if seed is None else seed)
    true = frame.true_labels
    keep = rng.random(true.shape) < cfg.p_correct
    offset = rng.integers(1, NUM_CLASSES, size=true.shape)
    labels = np.where(keep, true, (true + offset) % NUM_CLASSES)
    u = rng.random(true.shape)
    lo_c, hi_c = cfg.conf_correct_range
    lo_w, hi_w = cfg.conf_wrong_range
    conf = np.where(keep, lo_c + (hi_c - lo_c) * u, lo_w + (hi_w - lo_w) * u)
    return SemanticObservation(
        color=frame.color,
        depth=frame.depth,
        labels=labels.astype(np.int64),
        confidence=conf,
        w2c=frame.w2c,
        camera=frame.camera,
    )


def dump_observation(obs: SemanticObservation, directory, stem: str = "obs") -> list[Path]:
    """Debug dump: color/label/confidence PNGs and a JSON sidecar with pose and depth range."""
    from PIL import Image

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / f"{stem}_color.png", out / f"{stem}_labels.png", out / f"{stem}_conf.png"]
    Image.fromarray((np.clip(obs.color, 0, 1) * 255).astype(np.uint8)).save(paths[0])
    Image.fromarray((obs.labels * (255 // (NUM_CLASSES - 1))).astype(np.uint8)).save(paths[1])
    Image.fromarray((obs.confidence * 255).astype(np.uint8)).save(paths[2])
    meta = out / f"{stem}.json"
    meta.write_text(json.dumps({
        "w2c": obs.w2c.tolist(),
        "depth_min": float(obs.depth.min()),
        "depth_max": float(obs.depth.max()),
        "camera": obs.camera.__dict__,
    }, indent=1))
    return paths + [meta]

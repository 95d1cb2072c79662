from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..classes import NUM_CLASSES, TARGET_CLASS
from ..geometry import ConfigError, backproject, invert_pose
from .gaussians import GaussianMap
from .render import RenderedFrame, render


@dataclass(frozen=True)
class DensifyConfig:
    silhouette_threshold: float = 0.9
    nontarget_keep_fraction: float = 0.1
    depth_error_threshold: float = 0.02
    max_depth: float | None = 1.0
    init_opacity: float = 0.5
    label_smoothing: float = 0.1
    target_class: int = TARGET_CLASS

    def __post_init__(self):
        for name in ("silhouette_threshold", "nontarget_keep_fraction", "init_opacity", "label_smoothing"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.depth_error_threshold < 0:
            raise ConfigError("depth_error_threshold must be non-negative")


def densify_candidates(rendered: RenderedFrame, obs, cfg: DensifyConfig) -> np.ndarray:
    """Pixels the map does not explain: low silhouette or large depth error."""
    valid = obs.depth < obs.camera.far
    if cfg.max_depth is not None:
        valid &= obs.depth <= cfg.max_depth
    sil = rendered.silhouette
    with np.errstate(divide="ignore", invalid="ignore"):
        expected = np.where(sil > 0, rendered.depth / np.where(sil > 0, sil, 1.0), np.inf)
    depth_err = np.abs(expected - obs.depth)
    return valid & ((sil < cfg.silhouette_threshold) | (depth_err > cfg.depth_error_threshold))


def densify(gmap: GaussianMap, obs, cfg: DensifyConfig = DensifyConfig(),
            rng: np.random.Generator | None = None, rendered: RenderedFrame | None = None,
            cutoff_sigma: float | None = 3.0) -> tuple[GaussianMap, int]:
    """Spawn splats at back-projected candidate pixels.

    Target-labelled candidates always spawn; other candidates survive with
    probability ``nontarget_keep_fraction``. New splats cover one pixel
    (radius ``z / fx``), start at ``init_opacity`` with the observed color
    and a smoothed one-hot of the observed label.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    cam = obs.camera
    if rendered is None:
        rendered = render(gmap, cam, obs.w2c, cutoff_sigma=cutoff_sigma)
    cand = densify_candidates(rendered, obs, cfg)
    draw = rng.random(cand.shape)
    keep = cand & ((obs.labels == cfg.target_class) | (draw < cfg.nontarget_keep_fraction))
    v, u = np.nonzero(keep)
    out = gmap.copy()
    if u.size == 0:
        return out, 0
    z = obs.depth[v, u]
    pts = backproject(cam, u, v, z, invert_pose(obs.w2c))
    eps = cfg.label_smoothing
    sem = np.full((u.size, NUM_CLASSES), eps / (NUM_CLASSES - 1))
    sem[np.arange(u.size), obs.labels[v, u]] = 1.0 - eps
    out.append(pts, z / cam.fx, obs.color[v, u], np.full(u.size, cfg.init_opacity), sem)
    return out, int(u.size)


def prune(gmap: GaussianMap, min_opacity: float = 0.005, max_radius: float = 0.1) -> GaussianMap:
    keep = (gmap.opacity >= min_opacity) & (gmap.radius <= max_radius)
    if np.all(keep):
        return gmap.copy()
    return gmap.subset(keep)

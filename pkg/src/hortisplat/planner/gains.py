"""View information gains over a semantic voxel map.

Both gains cast a subsampled ray bundle through the camera frustum. Rays run
to ``max_range`` in z-depth, stop at the first occupied voxel (inclusive) or
when they leave the mapped block, and every voxel counts at most once per
view. UVC counts unknown voxels; OSAMCEP sums, over non-free voxels, the
class entropy scaled by one plus the number of nearby occupied target voxels.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from ..classes import TARGET_CLASS
from ..geometry import CameraModel
from ..octomap import SemanticOctomap, _flat, softmax_rows
from ..voxel_walk import max_steps, walk


@njit(cache=True)
def _bundle_gain(origin, dirs, t_max, res, kmin, dims, log_odds, known, l_occ, weight, stamp, tag, cap):
    buf = np.empty((cap, 3), dtype=np.int64)
    total = 0.0
    for r in range(dirs.shape[0]):
        m = walk(origin[0], origin[1], origin[2], dirs[r, 0], dirs[r, 1], dirs[r, 2], t_max, res, buf)
        for j in range(m):
            idx = _flat(buf[j, 0], buf[j, 1], buf[j, 2], kmin, dims)
            if idx < 0:
                break
            if stamp[idx] != tag:
                stamp[idx] = tag
                total += weight[idx]
            if known[idx] and log_odds[idx] >= l_occ:
                break
    return total


class GainEvaluator:
    """Scores viewpoints against one frozen map state."""

    def __init__(self, omap: SemanticOctomap, cam: CameraModel, stride: int = 4,
                 max_range: float | None = None, proximity_radius: float | None = None,
                 target_class: int = TARGET_CLASS):
        self.omap = omap
        self.cam = cam
        self.rays = np.ascontiguousarray(cam.camera_rays(stride).reshape(-1, 3))
        self.max_range = omap.config.max_range if max_range is None else max_range
        radius = 2.0 * omap.resolution if proximity_radius is None else proximity_radius
        known = omap.known.astype(bool)
        free = known & (omap.log_odds < omap.config.l_occ)
        self.uvc_weight = (~known).astype(float)
        p = softmax_rows(omap.class_w)
        h = -np.sum(np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0), axis=1)
        prox = omap.target_proximity(radius, target_class)
        self.osamcep_weight = np.where(free, 0.0, h * (1.0 + prox))
        self._stamp = np.zeros(omap.size, dtype=np.int64)
        self._tag = 0

    def _run(self, c2w: np.ndarray, weight: np.ndarray) -> float:
        dirs = np.ascontiguousarray(self.rays @ c2w[:3, :3].T)
        origin = np.ascontiguousarray(c2w[:3, 3], dtype=float)
        cap = max_steps(self.max_range, np.abs(dirs).max(axis=0), self.omap.resolution)
        self._tag += 1
        o = self.omap
        return float(_bundle_gain(origin, dirs, float(self.max_range), o.resolution, o.key_min, o.dims,
                                  o.log_odds, o.known, o.config.l_occ, weight, self._stamp, self._tag, cap))

    def uvc(self, c2w: np.ndarray) -> float:
        return self._run(c2w, self.uvc_weight)

    def osamcep(self, c2w: np.ndarray) -> float:
        return self._run(c2w, self.osamcep_weight)


def uvc_gain(omap: SemanticOctomap, c2w: np.ndarray, cam: CameraModel, stride: int = 4) -> float:
    return GainEvaluator(omap, cam, stride).uvc(c2w)


def osamcep_gain(omap: SemanticOctomap, c2w: np.ndarray, cam: CameraModel,
                 proximity_radius: float | None = None, stride: int = 4) -> float:
    return GainEvaluator(omap, cam, stride, proximity_radius=proximity_radius).osamcep(c2w)

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import CameraModel
from . import rasterizer
from .gaussians import GaussianMap


@dataclass
class _Context:
    visible: np.ndarray  # indices into the map, front-to-back order
    pc: np.ndarray  # camera-space centers of visible splats
    radius: np.ndarray
    opacity: np.ndarray
    semantic: np.ndarray
    colors: np.ndarray
    us: np.ndarray
    vs: np.ndarray
    sig: np.ndarray
    offsets: np.ndarray
    pair_g: np.ndarray
    pair_T: np.ndarray
    pair_a: np.ndarray
    n_used: np.ndarray
    n_total: int
    R: np.ndarray
    cam: CameraModel


@dataclass
class RenderedFrame:
    color: np.ndarray  # (H, W, 3)
    depth: np.ndarray  # (H, W)
    semantic: np.ndarray  # (H, W, C)
    silhouette: np.ndarray  # (H, W)
    ctx: _Context | None = field(default=None, repr=False)

    @property
    def n_pairs(self) -> int:
        return 0 if self.ctx is None else int(self.ctx.pair_g.shape[0])

    def backward(self, g_color, g_depth, g_semantic, g_sil) -> dict[str, np.ndarray]:
        """Chain per-pixel channel gradients back to every map parameter."""
        ctx = self.ctx
        if ctx is None:
            raise RuntimeError("frame was rendered without a backward context")
        cam = ctx.cam
        H, W = cam.shape
        C = ctx.semantic.shape[1]
        n = ctx.n_total
        grads = {
            "means": np.zeros((n, 3)),
            "log_radius": np.zeros(n),
            "colors": np.zeros((n, 3)),
            "opacity_logit": np.zeros(n),
            "sem_logits": np.zeros((n, C)),
        }
        if ctx.visible.shape[0] == 0:
            return grads
        z = ctx.pc[:, 2]
        d_u, d_v, d_sig, d_o, d_z, d_col, d_sem = rasterizer.backward(
            ctx.us, ctx.vs, ctx.sig, ctx.opacity, z, ctx.colors, ctx.semantic,
            ctx.offsets, ctx.pair_g, ctx.pair_T, ctx.pair_a, ctx.n_used, H, W,
            np.ascontiguousarray(np.asarray(g_color, dtype=float).reshape(H * W, 3)),
            np.ascontiguousarray(np.asarray(g_depth, dtype=float).reshape(H * W)),
            np.ascontiguousarray(np.asarray(g_semantic, dtype=float).reshape(H * W, C)),
            np.ascontiguousarray(np.asarray(g_sil, dtype=float).reshape(H * W)),
        )
        x, y = ctx.pc[:, 0], ctx.pc[:, 1]
        d_pc = np.empty_like(ctx.pc)
        d_pc[:, 0] = d_u * cam.fx / z
        d_pc[:, 1] = d_v * cam.fy / z
        d_pc[:, 2] = (d_z - d_u * cam.fx * x / z ** 2 - d_v * cam.fy * y / z ** 2
                      - d_sig * ctx.radius * cam.fx / z ** 2)
        vis = ctx.visible
        grads["means"][vis] = d_pc @ ctx.R
        grads["log_radius"][vis] = d_sig * cam.fx / z * ctx.radius
        grads["colors"][vis] = d_col
        grads["opacity_logit"][vis] = d_o * ctx.opacity * (1.0 - ctx.opacity)
        s = ctx.semantic
        grads["sem_logits"][vis] = s * (d_sem - np.sum(d_sem * s, axis=1, keepdims=True))
        return grads


def render(gmap: GaussianMap, cam: CameraModel, w2c: np.ndarray, *,
           cutoff_sigma: float | None = 3.0, min_transmittance: float = 0.0) -> RenderedFrame:
    """Render color, depth, semantic and silhouette images of the map.

    Splats are ordered by camera-space depth of their centers (ties by id) and
    composited front to back. ``cutoff_sigma`` bounds each footprint in pixels
    (``None`` evaluates every splat at every pixel). Compositing stops once the
    transmittance drops below ``min_transmittance``.
    """
    H, W = cam.shape
    C = gmap.sem_logits.shape[1]
    R = w2c[:3, :3]
    pc_all = gmap.means @ R.T + w2c[:3, 3]
    z = pc_all[:, 2]
    radius_all = gmap.radius
    front = z > cam.near
    zf = np.where(front, z, 1.0)
    us_all = cam.fx * pc_all[:, 0] / zf + cam.cx
    vs_all = cam.fy * pc_all[:, 1] / zf + cam.cy
    sig_all = radius_all * cam.fx / zf
    if cutoff_sigma is None:
        foot = np.full(len(gmap), np.inf)
        keep = front
    else:
        foot = cutoff_sigma * sig_all
        keep = (front & (us_all + foot >= -0.5) & (us_all - foot <= W - 0.5)
                & (vs_all + foot >= -0.5) & (vs_all - foot <= H - 0.5))
    vis = np.flatnonzero(keep)
    vis = vis[np.lexsort((gmap.ids[vis], z[vis]))]

    pc = pc_all[vis]
    opacity = gmap.opacity[vis]
    semantic = gmap.semantic[vis] if vis.size else np.zeros((0, C))
    colors = np.ascontiguousarray(gmap.colors[vis])
    us, vs, sig = us_all[vis], vs_all[vis], sig_all[vis]
    offsets, pair_g = rasterizer.build_lists(us, vs, foot[vis], H, W)
    color, depth, sem, sil, pair_T, pair_a, n_used = rasterizer.forward(
        us, vs, sig, opacity, pc[:, 2].copy(), colors, np.ascontiguousarray(semantic),
        offsets, pair_g, H, W, float(min_transmittance))
    ctx = _Context(vis, pc, radius_all[vis], opacity, semantic, colors, us, vs, sig, offsets,
                   pair_g, pair_T, pair_a, n_used, len(gmap), R.copy(), cam)
    return RenderedFrame(color.reshape(H, W, 3), depth.reshape(H, W), sem.reshape(H, W, C),
                         sil.reshape(H, W), ctx)

"""Mapping loss: depth L1 + (L1, SSIM) color + confidence-weighted semantic L1."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import ConfigError
from .render import RenderedFrame
from .ssim import ssim_map


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0  # depth
    lambda2: float = 0.5  # color
    lambda3: float = 0.1  # semantic
    alpha: float = 0.8  # L1 share of the color term

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ConfigError("loss weights must be non-negative")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")


@dataclass
class LossResult:
    value: float
    terms: dict[str, float]
    mask: np.ndarray
    grads: dict[str, np.ndarray] = field(default_factory=dict)


def loss_mask(rendered: RenderedFrame, obs, sil_threshold: float | None = None,
              max_depth: float | None = None) -> np.ndarray:
    """Pixels that enter the loss: valid depth, optionally only well-observed ones."""
    mask = obs.depth < obs.camera.far
    if max_depth is not None:
        mask &= obs.depth <= max_depth
    if sil_threshold is not None:
        mask &= rendered.silhouette > sil_threshold
    return mask


def mapping_loss(rendered: RenderedFrame, obs, w: LossWeights = LossWeights(), *,
                 sil_threshold: float | None = None, max_depth: float | None = None,
                 use_confidence: bool = True, mask: np.ndarray | None = None,
                 with_grad: bool = True) -> LossResult:
    """Sum over masked pixels of ``l1 Ld + l2 Lc + l3 Ls``.

    ``Ld = |D - Dgt|``; ``Lc = a * mean_ch|C - Cgt| + (1 - a) * (1 - mean_ch SSIM)``;
    ``Ls = conf^2 * ||S - onehot(label)||_1``. With ``use_confidence=False`` the
    confidence is taken as 1. The mask is treated as constant.
    Gradients w.r.t. every map parameter are attached when the frame carries
    a render context.
    """
    H, W = obs.camera.shape
    if rendered.color.shape != (H, W, 3) or rendered.depth.shape != (H, W) \
            or obs.color.shape != (H, W, 3) or obs.labels.shape != (H, W):
        raise ValueError("rendered frame and observation shapes do not match")
    if mask is None:
        mask = loss_mask(rendered, obs, sil_threshold, max_depth)
    m = mask.astype(float)
    C = rendered.semantic.shape[2]
    onehot = np.eye(C)[obs.labels]
    conf2 = obs.confidence ** 2 if use_confidence else np.ones((H, W))

    dd = rendered.depth - obs.depth
    dc = rendered.color - obs.color
    ds = rendered.semantic - onehot
    ssim, ssim_bwd = ssim_map(rendered.color, obs.color, with_grad=with_grad)

    l_depth = float(np.sum(m * np.abs(dd)))
    l_l1 = float(np.sum(m[..., None] * np.abs(dc)) / 3.0)
    l_ssim = float(np.sum(m * (1.0 - ssim.mean(axis=2))))
    l_sem = float(np.sum((m * conf2)[..., None] * np.abs(ds)))
    value = (w.lambda1 * l_depth + w.lambda2 * (w.alpha * l_l1 + (1 - w.alpha) * l_ssim)
             + w.lambda3 * l_sem)
    res = LossResult(value, {"depth": l_depth, "color_l1": l_l1, "color_ssim": l_ssim, "semantic": l_sem}, mask)
    if not with_grad:
        return res

    g_depth = w.lambda1 * m * np.sign(dd)
    g_color = (w.lambda2 * w.alpha / 3.0) * m[..., None] * np.sign(dc)
    g_color += ssim_bwd(np.broadcast_to((-w.lambda2 * (1 - w.alpha) / 3.0) * m[..., None], ssim.shape))
    g_sem = w.lambda3 * (m * conf2)[..., None] * np.sign(ds)
    res.grads = {"color": g_color, "depth": g_depth, "semantic": g_sem}
    if rendered.ctx is not None:
        res.grads.update(rendered.backward(g_color, g_depth, g_sem, np.zeros((H, W))))
    return res



from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gaussians import PARAM_NAMES, GaussianMap
from .loss import LossWeights, loss_mask, mapping_loss
from .render import render


@dataclass(frozen=True)
class OptimConfig:
    iters: int = 30
    lr_means: float = 1e-5
    lr_colors: float = 2.5e-3
    lr_semantic: float = 5e-2
    lr_opacity: float = 5e-2
    lr_radius: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-15
    cutoff_sigma: float | None = 3.0
    min_transmittance: float = 1e-4
    sil_threshold: float | None = None
    max_depth: float | None = None
    use_confidence: bool = True

    def learning_rates(self) -> dict[str, float]:
        return {
            "means": self.lr_means,
            "log_radius": self.lr_radius,
            "colors": self.lr_colors,
            "opacity_logit": self.lr_opacity,
            "sem_logits": self.lr_semantic,
        }


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lrs: dict[str, float],
                 beta1=0.9, beta2=0.999, eps=1e-15):
        self.lrs = lrs
        self.b1, self.b2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k, p in params.items():
            g = grads[k]
            m = self.m[k]
            v = self.v[k]
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lrs[k] * (m / c1) / (np.sqrt(v / c2) + self.eps)


def optimize(gmap: GaussianMap, obs, weights: LossWeights = LossWeights(),
             cfg: OptimConfig = OptimConfig()) -> tuple[GaussianMap, list[float]]:
    """Fit the map to one observation with Adam; returns a new map and the loss history.

    Moments start from zero on every call. The loss mask is frozen from the
    initial render so the objective stays fixed during the run.
    """
    out = gmap.copy()
    history: list[float] = []
    if cfg.iters <= 0 or len(out) == 0:
        return out, history
    params = out.params()
    opt = Adam(params, cfg.learning_rates(), cfg.beta1, cfg.beta2, cfg.eps)
    mask = None
    for _ in range(cfg.iters):
        frame = render(out, obs.camera, obs.w2c, cutoff_sigma=cfg.cutoff_sigma,
                       min_transmittance=cfg.min_transmittance)
        if mask is None:
            mask = loss_mask(frame, obs, cfg.sil_threshold, cfg.max_depth)
        res = mapping_loss(frame, obs, weights, mask=mask, use_confidence=cfg.use_confidence)
        history.append(res.value)
        opt.step(params, {k: res.grads[k] for k in PARAM_NAMES})
        np.clip(out.colors, 0.0, 1.0, out=out.colors)
    frame = render(out, obs.camera, obs.w2c, cutoff_sigma=cfg.cutoff_sigma,
                   min_transmittance=cfg.min_transmittance)
    history.append(mapping_loss(frame, obs, weights, mask=mask, use_confidence=cfg.use_confidence,
                                with_grad=False).value)
    return out, history

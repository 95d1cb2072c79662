"""Isotropic semantic Gaussians and their parameter container."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ..classes import NUM_CLASSES
from ..geometry import CameraModel

PARAM_NAMES = ("means", "log_radius", "colors", "opacity_logit", "sem_logits")


@dataclass(frozen=True)
class Gaussian3D:
    mu: tuple[float, float, float]
    radius: float
    color: tuple[float, float, float]
    opacity: float
    semantic: tuple[float, ...]

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if not 0.0 <= self.opacity <= 1.0:
            raise ValueError("opacity must lie in [0, 1]")


def eval_gaussian(g: Gaussian3D, x) -> float:
    """Kernel value ``o * exp(-|x - mu|^2 / (2 r^2))`` at a 3D point."""
    d = np.asarray(x, dtype=float) - np.asarray(g.mu, dtype=float)
    return float(g.opacity * math.exp(-float(d @ d) / (2.0 * g.radius ** 2)))


class Splat2D(NamedTuple):
    center: tuple[float, float]
    sigma: float
    depth: float
    footprint: float


def project_gaussian(g: Gaussian3D, cam: CameraModel, w2c: np.ndarray,
                     cutoff_sigma: float = 3.0) -> Splat2D | None:
    """Pinhole projection of the center; isotropic image-space sigma ``r fx / z``."""
    pc = w2c[:3, :3] @ np.asarray(g.mu, dtype=float) + w2c[:3, 3]
    z = float(pc[2])
    if z <= cam.near:
        return None
    u = cam.fx * pc[0] / z + cam.cx
    v = cam.fy * pc[1] / z + cam.cy
    sigma = g.radius * cam.fx / z
    foot = cutoff_sigma * sigma
    if u + foot < -0.5 or u - foot > cam.width - 0.5 or v + foot < -0.5 or v - foot > cam.height - 0.5:
        return None
    return Splat2D((float(u), float(v)), float(sigma), z, float(foot))


def _logit(p):
    p = np.clip(p, 1e-6, 1 - 1e-6)
    return np.log(p / (1 - p))


def softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class GaussianMap:
    """Unconstrained parameter arrays for N splats.

    Opacity is a sigmoid of ``opacity_logit``, radius is ``exp(log_radius)``
    and the semantic vector is the softmax of ``sem_logits``. Colors are stored
    directly and clipped to [0, 1] after each update. ``ids`` are stable and
    break depth ties during rendering.
    """

    means: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    log_radius: np.ndarray = field(default_factory=lambda: np.zeros(0))
    colors: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    opacity_logit: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sem_logits: np.ndarray = field(default_factory=lambda: np.zeros((0, NUM_CLASSES)))
    ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    next_id: int = 0

    def __len__(self) -> int:
        return int(self.means.shape[0])

    @property
    def radius(self) -> np.ndarray:
        return np.exp(self.log_radius)

    @property
    def opacity(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.opacity_logit))

    @property
    def semantic(self) -> np.ndarray:
        return softmax(self.sem_logits)

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.sem_logits, axis=1)

    @classmethod
    def from_gaussians(cls, gs) -> "GaussianMap":
        m = cls()
        if gs:
            m.append(
                np.array([g.mu for g in gs], dtype=float),
                np.array([g.radius for g in gs], dtype=float),
                np.array([g.color for g in gs], dtype=float),
                np.array([g.opacity for g in gs], dtype=float),
                np.array([g.semantic for g in gs], dtype=float),
            )
        return m

    def to_gaussians(self) -> list[Gaussian3D]:
        r, o, s = self.radius, self.opacity, self.semantic
        return [Gaussian3D(tuple(self.means[i]), float(r[i]), tuple(self.colors[i]), float(o[i]), tuple(s[i]))
                for i in range(len(self))]

    def append(self, means, radius, colors, opacity, semantic) -> None:
        """Add splats given in constrained form."""
        n = np.asarray(means).shape[0]
        if n == 0:
            return
        sem = np.clip(np.asarray(semantic, dtype=float), 1e-9, None)
        self.means = np.concatenate([self.means, np.asarray(means, dtype=float)])
        self.log_radius = np.concatenate([self.log_radius, np.log(np.asarray(radius, dtype=float))])
        self.colors = np.concatenate([self.colors, np.asarray(colors, dtype=float)])
        self.opacity_logit = np.concatenate([self.opacity_logit, _logit(np.asarray(opacity, dtype=float))])
        self.sem_logits = np.concatenate([self.sem_logits, np.log(sem / sem.sum(axis=1, keepdims=True))])
        self.ids = np.concatenate([self.ids, np.arange(self.next_id, self.next_id + n, dtype=np.int64)])
        self.next_id += n

    def subset(self, keep: np.ndarray) -> "GaussianMap":
        return GaussianMap(self.means[keep], self.log_radius[keep], self.colors[keep],
                           self.opacity_logit[keep], self.sem_logits[keep], self.ids[keep], self.next_id)

    def copy(self) -> "GaussianMap":
        return GaussianMap(self.means.copy(), self.log_radius.copy(), self.colors.copy(),
                           self.opacity_logit.copy(), self.sem_logits.copy(), self.ids.copy(), self.next_id)

    def snapshot(self) -> "GaussianMap":
        """Immutable copy for concurrent readers (clustering, planning)."""
        snap = self.copy()
        for name in PARAM_NAMES + ("ids",):
            getattr(snap, name).setflags(write=False)
        return snap

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def nbytes(self) -> int:
        return sum(getattr(self, n).nbytes for n in PARAM_NAMES + ("ids",))

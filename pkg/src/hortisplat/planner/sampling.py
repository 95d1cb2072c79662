"""Candidate viewpoints: spheres around fruit clusters and planes along rows."""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..geometry import ConfigError, look_at, pose_from_axis, rotation_angle

_ids = itertools.count()


class ViewKind(str, enum.Enum):
    EXPLORATION = "exploration"
    EXPLOITATION = "exploitation"


class ViewStatus(str, enum.Enum):
    CANDIDATE = "candidate"
    FEASIBLE = "feasible"
    EXECUTED = "executed"


@dataclass(frozen=True)
class SamplingConfig:
    sphere_radius: float = 0.4
    n_azimuth: int = 10
    n_elevation: int = 5
    elevation_band: tuple[float, float] = (math.radians(-20.0), math.radians(50.0))
    row_plane_offset: float = 0.4
    exploration_grid: tuple[int, int] = (6, 3)  # along the row, along height

    def __post_init__(self):
        if not self.sphere_radius > 0:
            raise ConfigError("sphere_radius must be positive")
        if min(self.n_azimuth, self.n_elevation, *self.exploration_grid) < 1:
            raise ConfigError("sample counts must be at least 1")
        lo, hi = self.elevation_band
        if not -math.pi / 2 <= lo <= hi <= math.pi / 2:
            raise ConfigError("elevation band must lie in [-pi/2, pi/2]")


@dataclass(frozen=True)
class Viewpoint:
    pose: np.ndarray  # camera-to-world
    kind: ViewKind
    joints: tuple[float, ...] | None = None
    gain: float = 0.0
    raw_gain: float = 0.0
    status: ViewStatus = ViewStatus.CANDIDATE
    vid: int = field(default_factory=lambda: next(_ids))

    @property
    def position(self) -> np.ndarray:
        return self.pose[:3, 3]

    @property
    def axis(self) -> np.ndarray:
        return self.pose[:3, 2]

    def with_(self, **kw) -> "Viewpoint":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {
            "id": self.vid,
            "kind": self.kind.value,
            "status": self.status.value,
            "pose": np.asarray(self.pose).tolist(),
            "joints": None if self.joints is None else list(self.joints),
            "gain": self.gain,
            "raw_gain": self.raw_gain,
        }


def renumber(viewpoints: list[Viewpoint], start: int = 0) -> list[Viewpoint]:
    """Assign consecutive ids so candidate order, not global state, drives tie-breaks."""
    return [vp.with_(vid=start + i) for i, vp in enumerate(viewpoints)]


def sample_exploitation(centroids, cfg: SamplingConfig = SamplingConfig()) -> list[Viewpoint]:
    out = []
    lo, hi = cfg.elevation_band
    for c in np.asarray(centroids, dtype=float).reshape(-1, 3):
        for j in range(cfg.n_elevation):
            th = lo + (j + 0.5) * (hi - lo) / cfg.n_elevation
            for i in range(cfg.n_azimuth):
                ph = 2.0 * math.pi * i / cfg.n_azimuth
                d = np.array([math.cos(th) * math.cos(ph), math.cos(th) * math.sin(ph), math.sin(th)])
                out.append(Viewpoint(look_at(c + cfg.sphere_radius * d, c), ViewKind.EXPLOITATION))
    return renumber(out)


def row_normal(row) -> np.ndarray:
    """Horizontal unit vector perpendicular to the row (side +1 direction)."""
    n = np.cross([0.0, 0.0, 1.0], row.axis)
    return n / np.linalg.norm(n)


def sample_exploration(row, cfg: SamplingConfig = SamplingConfig(), side: int = 1) -> list[Viewpoint]:
    """Grid on the plane ``row_plane_offset`` from the row, looking straight at it."""
    n_along, n_up = cfg.exploration_grid
    start = np.asarray(row.start, dtype=float)
    normal = row_normal(row) * (1 if side >= 0 else -1)
    h_lo, h_hi = row.height_extent
    out = []
    for i in range(n_along):
        s = (i + 0.5) / n_along * row.length
        for j in range(n_up):
            h = h_lo + (j + 0.5) / n_up * (h_hi - h_lo)
            p = start + s * row.axis + cfg.row_plane_offset * normal
            p[2] = h
            out.append(Viewpoint(pose_from_axis(p, -normal), ViewKind.EXPLORATION))
    return renumber(out)


def is_duplicate(vp: Viewpoint, executed: list[Viewpoint], pos_tol: float = 0.05,
                 ang_tol: float = 0.2) -> bool:
    for e in executed:
        if np.linalg.norm(vp.position - e.position) <= pos_tol and \
                rotation_angle(vp.pose[:3, :3], e.pose[:3, :3]) <= ang_tol:
            return True
    return False

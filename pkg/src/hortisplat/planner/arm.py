"""Revolute-chain arm, discretized reachable workspace and pose projection."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..geometry import ConfigError, invert_pose, rotation_about, transform_points
from .sampling import Viewpoint, ViewStatus

WORKSPACE_CAP = 20000


@dataclass(frozen=True)
class ArmModel:
    """Chain of revolute joints; link i rotates about ``axes[i]`` then translates by ``offsets[i]``."""
    axes: tuple[tuple[float, float, float], ...]
    offsets: tuple[tuple[float, float, float], ...]
    limits: tuple[tuple[float, float], ...]
    steps: int = 5

    def __post_init__(self):
        n = len(self.axes)
        if n < 1:
            raise ConfigError("arm needs at least one joint")
        if len(self.offsets) != n or len(self.limits) != n:
            raise ConfigError("axes, offsets and limits must have equal length")
        if any(not lo < hi for lo, hi in self.limits):
            raise ConfigError("joint limits must satisfy low < high")
        if self.steps < 2:
            raise ConfigError("need at least 2 discretization steps per joint")

    @property
    def n_joints(self) -> int:
        return len(self.axes)

    @property
    def reach(self) -> float:
        return float(sum(np.linalg.norm(o) for o in self.offsets))

    def fk(self, joints) -> np.ndarray:
        """End-effector pose in the base frame."""
        T = np.eye(4)
        for ax, off, q in zip(self.axes, self.offsets, joints):
            step = np.eye(4)
            step[:3, :3] = rotation_about(ax, q)
            step[:3, 3] = step[:3, :3] @ np.asarray(off, dtype=float)
            T = T @ step
        return T

    def joint_grid(self) -> np.ndarray:
        return np.array(list(itertools.product(*[np.linspace(lo, hi, self.steps) for lo, hi in self.limits])))


def default_arm(steps: int = 5) -> ArmModel:
    """Six-joint anthropomorphic arm; link lengths sum to 0.5 m."""
    h = math.pi / 2
    return ArmModel(
        axes=((0, 0, 1), (0, 1, 0), (0, 1, 0), (1, 0, 0), (0, 1, 0), (1, 0, 0)),
        offsets=((0, 0, 0.05), (0.2, 0, 0), (0.15, 0, 0), (0.05, 0, 0), (0.05, 0, 0), (0, 0, 0)),
        limits=((-h, h), (-h, h), (-h, h), (-h, h), (-h, h), (-h, h)),
        steps=steps,
    )


def _batched_fk(arm: ArmModel, Q: np.ndarray) -> np.ndarray:
    n = Q.shape[0]
    T = np.broadcast_to(np.eye(4), (n, 4, 4)).copy()
    for i, (ax, off) in enumerate(zip(arm.axes, arm.offsets)):
        a = np.asarray(ax, dtype=float) / np.linalg.norm(ax)
        K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
        s = np.sin(Q[:, i])[:, None, None]
        c = np.cos(Q[:, i])[:, None, None]
        R = np.eye(3) + s * K + (1 - c) * (K @ K)
        step = np.broadcast_to(np.eye(4), (n, 4, 4)).copy()
        step[:, :3, :3] = R
        step[:, :3, 3] = R @ np.asarray(off, dtype=float)
        T = T @ step
    return T


class Workspace:
    """Reachable end-effector positions with a KD-tree, placed at ``base_pose`` in the world."""

    def __init__(self, positions: np.ndarray, joints: np.ndarray, base_pose: np.ndarray | None = None):
        self.positions = np.asarray(positions, dtype=float)
        self.joints = np.asarray(joints, dtype=float)
        self.tree = cKDTree(self.positions)
        self.base_pose = np.eye(4) if base_pose is None else np.asarray(base_pose, dtype=float)
        self._w2b = invert_pose(self.base_pose)

    def __len__(self) -> int:
        return len(self.positions)

    def placed(self, base_pose: np.ndarray) -> "Workspace":
        ws = object.__new__(Workspace)
        ws.positions, ws.joints, ws.tree = self.positions, self.joints, self.tree
        ws.base_pose = np.asarray(base_pose, dtype=float)
        ws._w2b = invert_pose(ws.base_pose)
        return ws

    def nearest(self, world_points: np.ndarray):
        """(distance, index) of the nearest reachable position for each world point."""
        return self.tree.query(transform_points(self._w2b, np.atleast_2d(world_points)))

    def world_position(self, index: int) -> np.ndarray:
        return transform_points(self.base_pose, self.positions[index][None])[0]


def reachable_workspace(arm: ArmModel, cap: int = WORKSPACE_CAP) -> Workspace:
    count = arm.steps ** arm.n_joints
    if count > cap:
        raise ConfigError(f"workspace of {count} poses exceeds cap {cap}")
    Q = arm.joint_grid()
    T = _batched_fk(arm, Q)
    return Workspace(T[:, :3, 3], Q)


def project_to_reachable(vp: Viewpoint, ws: Workspace, max_slide: float = 0.3, tol: float = 0.05,
                         step: float = 0.01) -> Viewpoint | None:
    """Slide along the optical axis (smallest |slide| first, forward before back) until reachable."""
    n = int(math.floor(max_slide / step + 1e-9))
    slides = [0.0]
    for i in range(1, n + 1):
        slides += [i * step, -i * step]
    slides = np.array(slides)
    pts = vp.position + slides[:, None] * vp.axis
    dist, idx = ws.nearest(pts)
    ok = np.nonzero(dist <= tol)[0]
    if ok.size == 0:
        return None
    k = ok[0]
    pose = vp.pose.copy()
    pose[:3, 3] = pts[k]
    return vp.with_(pose=pose, joints=tuple(float(q) for q in ws.joints[idx[k]]),
                    status=ViewStatus.FEASIBLE)

"""Fruit extraction from the splat map: DBSCAN clusters and convex-hull volumes."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .classes import TARGET_CLASS
from .geometry import ConfigError
from .plyio import write_ply

PRUNE_FLOOR = 0.005


@dataclass(frozen=True)
class ClusterConfig:
    eps: float = 0.02
    min_samples: int = 10

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigError("eps must be positive")
        if self.min_samples < 1:
            raise ConfigError("min_samples must be at least 1")


@dataclass
class FruitCluster:
    indices: np.ndarray
    centroid: np.ndarray
    hull_volume: float
    degenerate: bool = False


@dataclass
class FruitReport:
    count: int
    total_volume: float
    volumes: list[float] = field(default_factory=list)
    centroids: list[list[float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"count": self.count, "total_volume": self.total_volume,
                "volumes": list(self.volumes), "centroids": [list(c) for c in self.centroids]}


def extract_target_points(gmap, target_class: int = TARGET_CLASS,
                          min_opacity: float = PRUNE_FLOOR) -> np.ndarray:
    if len(gmap) == 0:
        return np.zeros((0, 3))
    keep = (gmap.labels == target_class) & (gmap.opacity >= min_opacity)
    return gmap.means[keep].copy()


def canonical_order(points: np.ndarray) -> np.ndarray:
    """Indices sorting points by x, then y, then z, then original index."""
    idx = np.arange(len(points))
    return np.lexsort((idx, points[:, 2], points[:, 1], points[:, 0])) if len(points) else idx


def dbscan(points: np.ndarray, cfg: ClusterConfig = ClusterConfig()) -> tuple[list[np.ndarray], np.ndarray]:
    """Euclidean DBSCAN; returns (member index arrays, noise indices), all in input indexing.

    Points are visited in canonical order; a border point joins the first
    cluster that reaches it. Clusters are numbered in discovery order and
    member arrays are sorted.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(pts)
    if n == 0:
        return [], np.zeros(0, dtype=np.int64)
    nbrs = cKDTree(pts).query_ball_point(pts, cfg.eps)
    core = np.array([len(nb) >= cfg.min_samples for nb in nbrs])
    label = np.full(n, -1, dtype=np.int64)
    clusters = []
    for i in canonical_order(pts):
        if label[i] >= 0 or not core[i]:
            continue
        cid = len(clusters)
        label[i] = cid
        members = [i]
        stack = [i]
        while stack:
            j = stack.pop()
            for k in nbrs[j]:
                if label[k] < 0:
                    label[k] = cid
                    members.append(k)
                    if core[k]:
                        stack.append(k)
        clusters.append(np.sort(np.asarray(members, dtype=np.int64)))
    return clusters, np.nonzero(label < 0)[0]


class ConvexHull3D:
    """Incremental 3D convex hull.

    Points are inserted in lexicographic order; the seed tetrahedron takes the
    first extreme point found at each stage, so the result is deterministic.
    ``degenerate`` is set when all points are coplanar within ``tol``.
    """

    def __init__(self, points: np.ndarray, tol: float = 1e-9):
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        pts = pts[canonical_order(pts)] if len(pts) else pts
        self.points = pts
        self.faces = np.zeros((0, 3), dtype=np.int64)
        self.degenerate = True
        if len(pts) < 4:
            return
        scale = float(np.max(np.ptp(pts, axis=0)))
        self.tol = tol * max(scale, 1.0)
        seed = self._seed()
        if seed is None:
            return
        self.degenerate = False
        self._build(seed)

    def _seed(self):
        p = self.points
        i0 = 0
        d = np.linalg.norm(p - p[i0], axis=1)
        i1 = int(np.argmax(d))
        if d[i1] <= self.tol:
            return None
        u = (p[i1] - p[i0]) / d[i1]
        rel = p - p[i0]
        perp = rel - np.outer(rel @ u, u)
        d = np.linalg.norm(perp, axis=1)
        i2 = int(np.argmax(d))
        if d[i2] <= self.tol:
            return None
        nrm = np.cross(p[i1] - p[i0], p[i2] - p[i0])
        nrm /= np.linalg.norm(nrm)
        d = rel @ nrm
        i3 = int(np.argmax(np.abs(d)))
        if abs(d[i3]) <= self.tol:
            return None
        return i0, i1, i2, i3

    def _build(self, seed):
        p = self.points
        i0, i1, i2, i3 = seed
        faces = [(i0, i1, i2), (i0, i3, i1), (i1, i3, i2), (i2, i3, i0)]
        if np.dot(np.cross(p[i1] - p[i0], p[i2] - p[i0]), p[i3] - p[i0]) > 0:
            faces = [(a, c, b) for a, b, c in faces]
        F = np.array(faces, dtype=np.int64)
        N, off = self._planes(F)
        used = set(seed)
        for k in range(len(p)):
            if k in used:
                continue
            vis = (N @ p[k] - off) > self.tol
            if not vis.any():
                continue
            vf = F[vis]
            edges = {}
            for a, b, c in vf:
                for e in ((a, b), (b, c), (c, a)):
                    edges[e] = True
            horizon = [e for e in edges if (e[1], e[0]) not in edges]
            new = np.array([(a, b, k) for a, b in horizon], dtype=np.int64)
            nN, noff = self._planes(new)
            F = np.vstack([F[~vis], new])
            N = np.vstack([N[~vis], nN])
            off = np.concatenate([off[~vis], noff])
        self.faces = F

    def _planes(self, F):
        p = self.points
        n = np.cross(p[F[:, 1]] - p[F[:, 0]], p[F[:, 2]] - p[F[:, 0]])
        ln = np.linalg.norm(n, axis=1, keepdims=True)
        n = n / np.where(ln > 0, ln, 1.0)
        return n, np.einsum("ij,ij->i", n, p[F[:, 0]])

    @property
    def vertices(self) -> np.ndarray:
        return np.unique(self.faces)

    @property
    def volume(self) -> float:
        if self.degenerate:
            return 0.0
        p = self.points
        ref = p[self.faces[0, 0]]
        a, b, c = (p[self.faces[:, i]] - ref for i in range(3))
        return float(np.sum(np.einsum("ij,ij->i", a, np.cross(b, c))) / 6.0)


def cluster_volume(points: np.ndarray) -> tuple[float, bool]:
    """Convex-hull volume in m³ and a degeneracy flag (fewer than 4 points or coplanar)."""
    hull = ConvexHull3D(points)
    return hull.volume, hull.degenerate


def cluster_points(points: np.ndarray, cfg: ClusterConfig = ClusterConfig()) -> list[FruitCluster]:
    clusters, _ = dbscan(points, cfg)
    out = []
    for idx in clusters:
        vol, deg = cluster_volume(points[idx])
        out.append(FruitCluster(idx, points[idx].mean(axis=0), vol, deg))
    return out


def fruit_report(gmap, cfg: ClusterConfig = ClusterConfig(), target_class: int = TARGET_CLASS) -> FruitReport:
    pts = extract_target_points(gmap, target_class)
    return report_from_points(pts, cfg)


def report_from_points(pts: np.ndarray, cfg: ClusterConfig = ClusterConfig()) -> FruitReport:
    cl = cluster_points(pts, cfg)
    vols = [c.hull_volume for c in cl]
    return FruitReport(len(cl), float(sum(vols)), vols, [c.centroid.tolist() for c in cl])


def save_report(report: FruitReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)


def export_clusters_ply(points: np.ndarray, clusters: list[FruitCluster], path) -> None:
    """One PLY with every clustered point tagged by its cluster id."""
    if clusters:
        idx = np.concatenate([c.indices for c in clusters])
        cid = np.concatenate([np.full(len(c.indices), i, dtype=np.int32) for i, c in enumerate(clusters)])
    else:
        idx = np.zeros(0, dtype=np.int64)
        cid = np.zeros(0, dtype=np.int32)
    write_ply(path, points[idx], {"cluster_id": cid})

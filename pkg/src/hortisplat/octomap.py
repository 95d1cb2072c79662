"""Probabilistic semantic voxel map used for planning, gains and collisions.

Voxels are addressed by integer keys ``floor(p / resolution)`` and stored in a
dense block covering the configured bounds. Occupancy is a clamped log-odds
value; semantics are additive per-class log-likelihoods normalized on read.
Points outside the bounds read as unknown and are never written.
"""
from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass

import numpy as np
from numba import njit

from .classes import NUM_CLASSES, TARGET_CLASS
from .geometry import ConfigError, invert_pose
from .voxel_walk import max_steps, traverse, walk


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


class VoxelState(enum.IntEnum):
    UNKNOWN = 0
    FREE = 1
    OCCUPIED = 2


@dataclass(frozen=True)
class OctomapConfig:
    resolution: float = 0.05
    max_range: float = 1.0
    p_hit: float = 0.7
    p_miss: float = 0.4
    l_min: float = -2.0
    l_max: float = 3.5
    occ_threshold: float = 0.5
    label_likelihood: float = 0.8
    other_likelihood: float = 0.1
    unknown_is_free: bool = True

    def __post_init__(self):
        if self.resolution <= 0:
            raise ConfigError("resolution must be positive")
        if not 0.5 < self.p_hit < 1.0:
            raise ConfigError("p_hit must be in (0.5, 1)")
        if not 0.0 < self.p_miss < 0.5:
            raise ConfigError("p_miss must be in (0, 0.5)")
        if not self.l_min < 0 < self.l_max:
            raise ConfigError("need l_min < 0 < l_max")
        if not 0.0 < self.occ_threshold < 1.0:
            raise ConfigError("occ_threshold must be in (0, 1)")
        if self.max_range <= 0:
            raise ConfigError("max_range must be positive")

    @property
    def l_hit(self) -> float:
        return logit(self.p_hit)

    @property
    def l_miss(self) -> float:
        return logit(self.p_miss)

    @property
    def l_occ(self) -> float:
        return logit(self.occ_threshold)


@njit(cache=True)
def _flat(kx, ky, kz, kmin, dims):
    ix = kx - kmin[0]
    iy = ky - kmin[1]
    iz = kz - kmin[2]
    if ix < 0 or iy < 0 or iz < 0 or ix >= dims[0] or iy >= dims[1] or iz >= dims[2]:
        return -1
    return (ix * dims[1] + iy) * dims[2] + iz


@njit(cache=True)
def _integrate(origin, dirs, tlen, is_hit, res, kmin, dims, log_odds, known,
               occ_stamp, free_stamp, scan, l_hit, l_miss, l_min, l_max, cap):
    n = dirs.shape[0]
    buf = np.empty((cap, 3), dtype=np.int64)
    end_idx = np.full(n, -1, dtype=np.int64)
    # endpoints first so that occupied wins over free within one scan
    for r in range(n):
        if not is_hit[r]:
            continue
        m = walk(origin[0], origin[1], origin[2], dirs[r, 0], dirs[r, 1], dirs[r, 2], tlen[r], res, buf)
        idx = _flat(buf[m - 1, 0], buf[m - 1, 1], buf[m - 1, 2], kmin, dims)
        end_idx[r] = idx
        if idx >= 0:
            occ_stamp[idx] = scan
    for r in range(n):
        m = walk(origin[0], origin[1], origin[2], dirs[r, 0], dirs[r, 1], dirs[r, 2], tlen[r], res, buf)
        last = m - 1 if is_hit[r] else m
        for j in range(last):
            idx = _flat(buf[j, 0], buf[j, 1], buf[j, 2], kmin, dims)
            if idx < 0 or occ_stamp[idx] == scan or free_stamp[idx] == scan:
                continue
            free_stamp[idx] = scan
            v = log_odds[idx] + l_miss
            log_odds[idx] = min(max(v, l_min), l_max)
            known[idx] = 1
    for r in range(n):
        idx = end_idx[r]
        if idx >= 0 and occ_stamp[idx] == scan:
            occ_stamp[idx] = -scan
            v = log_odds[idx] + l_hit
            log_odds[idx] = min(max(v, l_min), l_max)
            known[idx] = 1
    return end_idx


@njit(cache=True)
def _cast(origin, d, t_max, res, kmin, dims, log_odds, known, l_occ, cap):
    buf = np.empty((cap, 3), dtype=np.int64)
    m = walk(origin[0], origin[1], origin[2], d[0], d[1], d[2], t_max, res, buf)
    for j in range(m):
        idx = _flat(buf[j, 0], buf[j, 1], buf[j, 2], kmin, dims)
        if idx >= 0 and known[idx] and log_odds[idx] >= l_occ:
            return buf[: j + 1].copy(), j
    return buf[:m].copy(), -1


class SemanticOctomap:
    """Dense-block semantic occupancy map.

    ``epoch`` increments on every insertion; :meth:`snapshot` hands readers an
    immutable copy so planners never see a half-applied scan.
    """

    RECORD = np.dtype([("key", "<i4", 3), ("log_odds", "<f8"), ("class_w", "<f8", NUM_CLASSES)])
    MAGIC = b"HSOM"
    VERSION = 1
    HEADER = "<4sI d 3q 3q q 8d"

    def __init__(self, config: OctomapConfig, lo, hi):
        self.config = config
        res = config.resolution
        self.key_min = np.floor(np.asarray(lo, dtype=float) / res).astype(np.int64)
        key_max = np.floor(np.asarray(hi, dtype=float) / res).astype(np.int64)
        self.dims = (key_max - self.key_min + 1).astype(np.int64)
        n = int(np.prod(self.dims))
        self.log_odds = np.zeros(n)
        self.known = np.zeros(n, dtype=np.uint8)
        self.class_w = np.zeros((n, NUM_CLASSES))
        self._occ_stamp = np.zeros(n, dtype=np.int64)
        self._free_stamp = np.zeros(n, dtype=np.int64)
        self.epoch = 0
        self.readonly = False

    # -- addressing -----------------------------------------------------------
    @property
    def resolution(self) -> float:
        return self.config.resolution

    @property
    def size(self) -> int:
        return int(self.log_odds.shape[0])

    def key_of(self, point) -> np.ndarray:
        return np.floor(np.asarray(point, dtype=float) / self.resolution).astype(np.int64)

    def key_center(self, key) -> np.ndarray:
        return (np.asarray(key, dtype=float) + 0.5) * self.resolution

    def flat_index(self, keys) -> np.ndarray:
        """Flat storage index for keys (..., 3); -1 outside the block."""
        k = np.asarray(keys, dtype=np.int64) - self.key_min
        inside = np.all((k >= 0) & (k < self.dims), axis=-1)
        flat = (k[..., 0] * self.dims[1] + k[..., 1]) * self.dims[2] + k[..., 2]
        return np.where(inside, flat, -1)

    def keys_of_flat(self, flat) -> np.ndarray:
        flat = np.asarray(flat, dtype=np.int64)
        ix, rem = np.divmod(flat, self.dims[1] * self.dims[2])
        iy, iz = np.divmod(rem, self.dims[2])
        return np.stack([ix, iy, iz], axis=-1) + self.key_min

    # -- updates --------------------------------------------------------------
    def insert_observation(self, obs) -> None:
        """Integrate one posed depth + label image.

        Pixels whose depth is the far-plane sentinel carry no return and are
        skipped. Depth beyond ``max_range`` clears free space up to
        ``max_range`` only. Within one scan each voxel is updated at most once
        and an endpoint overrides free-space evidence, as in stock octree maps.
        Each endpoint voxel receives one label update, taken from the ray whose
        endpoint lies closest to the voxel center.
        """
        if self.readonly:
            raise RuntimeError("cannot insert into a snapshot")
        cfg = self.config
        cam = obs.camera
        c2w = invert_pose(obs.w2c)
        origin = np.ascontiguousarray(c2w[:3, 3])
        valid = (obs.depth < cam.far).ravel()
        depth = obs.depth.ravel()[valid]
        dirs = (cam.camera_rays().reshape(-1, 3)[valid] @ c2w[:3, :3].T).copy()
        labels = np.asarray(obs.labels).ravel()[valid]
        is_hit = depth <= cfg.max_range
        tlen = np.minimum(depth, cfg.max_range)
        if dirs.shape[0] == 0:
            self.epoch += 1
            return
        cap = max_steps(float(tlen.max()), np.abs(dirs).max(axis=0), self.resolution)
        self._scan = getattr(self, "_scan", 0) + 1
        end_idx = _integrate(origin, dirs, tlen, is_hit, self.resolution, self.key_min, self.dims,
                             self.log_odds, self.known, self._occ_stamp, self._free_stamp,
                             self._scan, cfg.l_hit, cfg.l_miss, cfg.l_min, cfg.l_max, cap)
        self._fuse_labels(origin, dirs, tlen, end_idx, labels)
        self.epoch += 1

    def _fuse_labels(self, origin, dirs, tlen, end_idx, labels) -> None:
        sel = end_idx >= 0
        if not np.any(sel):
            return
        idx = end_idx[sel]
        pts = origin + dirs[sel] * tlen[sel, None]
        centers = self.key_center(self.keys_of_flat(idx))
        dist = np.linalg.norm(pts - centers, axis=1)
        order = np.lexsort((dist, idx))
        idx_sorted = idx[order]
        first = np.ones(idx_sorted.shape[0], dtype=bool)
        first[1:] = idx_sorted[1:] != idx_sorted[:-1]
        vox = idx_sorted[first]
        lab = labels[sel][order][first]
        lo = math.log(self.config.other_likelihood)
        hi = math.log(self.config.label_likelihood)
        inc = np.full((vox.shape[0], NUM_CLASSES), lo)
        inc[np.arange(vox.shape[0]), lab] = hi
        self.class_w[vox] += inc

    # -- queries --------------------------------------------------------------
    def _index_of_point(self, point) -> int:
        return int(self.flat_index(self.key_of(point)))

    def voxel_state(self, point) -> VoxelState:
        i = self._index_of_point(point)
        if i < 0 or not self.known[i]:
            return VoxelState.UNKNOWN
        return VoxelState.OCCUPIED if self.log_odds[i] >= self.config.l_occ else VoxelState.FREE

    def occupancy_probability(self, point) -> float:
        i = self._index_of_point(point)
        if i < 0:
            return 0.5
        return float(1.0 / (1.0 + math.exp(-self.log_odds[i])))

    def class_distribution(self, point) -> np.ndarray:
        i = self._index_of_point(point)
        if i < 0 or not self.known[i]:
            return np.full(NUM_CLASSES, 1.0 / NUM_CLASSES)
        return softmax_rows(self.class_w[i][None])[0]

    def state_array(self) -> np.ndarray:
        st = np.full(self.size, VoxelState.UNKNOWN, dtype=np.int8)
        known = self.known.astype(bool)
        st[known] = np.where(self.log_odds[known] >= self.config.l_occ, VoxelState.OCCUPIED, VoxelState.FREE)
        return st

    def occupied_mask(self) -> np.ndarray:
        return self.known.astype(bool) & (self.log_odds >= self.config.l_occ)

    def argmax_class(self) -> np.ndarray:
        return np.argmax(self.class_w, axis=1)

    def occupied_centers(self, class_id: int | None = None) -> np.ndarray:
        mask = self.occupied_mask()
        if class_id is not None:
            mask &= self.argmax_class() == class_id
        return self.key_center(self.keys_of_flat(np.flatnonzero(mask)))

    def ray_cast(self, origin, direction, max_range: float):
        """Traverse from ``origin`` along ``direction`` for ``max_range`` meters.

        Returns ``(keys, hit)`` where ``hit`` is the key of the first occupied
        voxel (included as the last traversed key) or ``None``.
        """
        d = np.asarray(direction, dtype=float)
        norm = np.linalg.norm(d)
        if norm == 0:
            raise ValueError("direction must be nonzero")
        d = d / norm
        cap = max_steps(max_range, d, self.resolution)
        keys, j = _cast(np.asarray(origin, dtype=float), d, float(max_range), self.resolution,
                        self.key_min, self.dims, self.log_odds, self.known, self.config.l_occ, cap)
        return keys, (None if j < 0 else keys[j].copy())

    def blocked_mask(self) -> np.ndarray:
        mask = self.occupied_mask()
        if not self.config.unknown_is_free:
            mask |= ~self.known.astype(bool)
        return mask

    def collision_free(self, a, b, robot_radius: float) -> bool:
        """True iff no occupied voxel (as a box) lies within ``robot_radius`` of segment ab."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        lo = self.key_of(np.minimum(a, b) - robot_radius) - self.key_min
        hi = self.key_of(np.maximum(a, b) + robot_radius) - self.key_min
        lo = np.clip(lo, 0, self.dims - 1)
        hi = np.clip(hi, -1, self.dims - 1)
        if np.any(hi < lo):
            # entirely outside the stored block: unknown space
            return self.config.unknown_is_free
        block = self.blocked_mask().reshape(tuple(self.dims))[lo[0]:hi[0] + 1, lo[1]:hi[1] + 1, lo[2]:hi[2] + 1]
        idx = np.argwhere(block)
        if idx.shape[0] == 0:
            return True
        keys = idx + lo + self.key_min
        box_lo = keys * self.resolution
        dist = segment_box_distance(a, b, box_lo, box_lo + self.resolution)
        return bool(np.all(dist > robot_radius))

    def target_proximity(self, radius: float, target_class: int = TARGET_CLASS) -> np.ndarray:
        """Per voxel, number of occupied target-class voxels within ``radius`` (self excluded)."""
        from scipy.ndimage import convolve

        target = (self.occupied_mask() & (self.argmax_class() == target_class)).reshape(tuple(self.dims))
        r = int(math.floor(radius / self.resolution + 1e-9))
        g = np.arange(-r, r + 1)
        ox, oy, oz = np.meshgrid(g, g, g, indexing="ij")
        kernel = ((ox ** 2 + oy ** 2 + oz ** 2) * self.resolution ** 2 <= radius ** 2 + 1e-12).astype(np.int32)
        kernel[r, r, r] = 0
        return convolve(target.astype(np.int32), kernel, mode="constant", cval=0).ravel()

    # -- snapshots and persistence ---------------------------------------------
    def snapshot(self) -> "SemanticOctomap":
        snap = object.__new__(SemanticOctomap)
        snap.config = self.config
        snap.key_min = self.key_min.copy()
        snap.dims = self.dims.copy()
        for name in ("log_odds", "known", "class_w"):
            arr = getattr(self, name).copy()
            arr.setflags(write=False)
            setattr(snap, name, arr)
        snap._occ_stamp = snap._free_stamp = None
        snap.epoch = self.epoch
        snap.readonly = True
        return snap

    def records(self) -> np.ndarray:
        idx = np.flatnonzero(self.known)
        rec = np.zeros(idx.shape[0], dtype=self.RECORD)
        rec["key"] = self.keys_of_flat(idx)
        rec["log_odds"] = self.log_odds[idx]
        rec["class_w"] = self.class_w[idx]
        return rec

    def dump(self, path) -> None:
        rec = self.records()
        cfg = self.config
        header = struct.pack(self.HEADER, self.MAGIC, self.VERSION, cfg.resolution,
                             *self.key_min.tolist(), *self.dims.tolist(), rec.shape[0],
                             cfg.max_range, cfg.p_hit, cfg.p_miss, cfg.l_min, cfg.l_max,
                             cfg.occ_threshold, cfg.label_likelihood, cfg.other_likelihood)
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(rec.tobytes())

    @classmethod
    def load(cls, path) -> "SemanticOctomap":
        fmt = cls.HEADER
        with open(path, "rb") as fh:
            raw = fh.read()
        head = struct.unpack_from(fmt, raw)
        magic, version, res = head[0], head[1], head[2]
        if magic != cls.MAGIC or version != cls.VERSION:
            raise ValueError("not a hortisplat octomap dump (or unsupported version)")
        kmin = np.array(head[3:6])
        dims = np.array(head[6:9])
        count = head[9]
        max_range, p_hit, p_miss, l_min, l_max, occ, lab, other = head[10:18]
        cfg = OctomapConfig(resolution=res, max_range=max_range, p_hit=p_hit, p_miss=p_miss,
                            l_min=l_min, l_max=l_max, occ_threshold=occ,
                            label_likelihood=lab, other_likelihood=other)
        m = cls(cfg, kmin * res + 0.5 * res, (kmin + dims - 1) * res + 0.5 * res)
        assert np.array_equal(m.key_min, kmin) and np.array_equal(m.dims, dims)
        rec = np.frombuffer(raw, dtype=cls.RECORD, count=count, offset=struct.calcsize(fmt))
        idx = m.flat_index(rec["key"].astype(np.int64))
        m.log_odds[idx] = rec["log_odds"]
        m.class_w[idx] = rec["class_w"]
        m.known[idx] = 1
        return m

    def export_ply(self, path) -> None:
        from .plyio import write_ply

        idx = np.flatnonzero(self.occupied_mask())
        pts = self.key_center(self.keys_of_flat(idx))
        write_ply(path, pts, {"class_id": self.argmax_class()[idx].astype(np.int32)})


def softmax_rows(w: np.ndarray) -> np.ndarray:
    z = w - w.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def segment_box_distance(a, b, box_lo, box_hi, iters: int = 80) -> np.ndarray:
    """Euclidean distance between segment ab and each box; exact to ~1e-15 m.

    The distance from ``a + t (b - a)`` to a convex box is convex in ``t``, so a
    vectorized golden-section search finds the minimum.
    """
    box_lo = np.atleast_2d(box_lo)
    box_hi = np.atleast_2d(box_hi)
    ab = b - a

    def f(t):
        p = a + t[:, None] * ab
        q = np.clip(p, box_lo, box_hi)
        return np.linalg.norm(p - q, axis=1)

    n = box_lo.shape[0]
    lo = np.zeros(n)
    hi = np.ones(n)
    g = (math.sqrt(5) - 1) / 2
    x1 = hi - g * (hi - lo)
    x2 = lo + g * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        left = f1 <= f2
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        nx1 = hi - g * (hi - lo)
        nx2 = lo + g * (hi - lo)
        x1, x2 = nx1, nx2
        f1, f2 = f(x1), f(x2)
    return np.minimum.reduce([f(lo), f(hi), f(np.zeros(n)), f(np.ones(n)), f1, f2])

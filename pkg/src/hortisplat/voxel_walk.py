"""Amanatides-Woo grid traversal.

A point lying exactly on a voxel face belongs to the voxel the ray enters
there, i.e. the one on the far side along the direction of travel. The same
rule is used for the start point, the end point and every intermediate face,
so the visited sequence equals the keys of ``origin + t * direction`` sampled
over ``t`` in ``[0, t_max]``.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def entry_key(p, d, res):
    c = p / res
    k = math.floor(c)
    if c == k and d < 0:
        k -= 1
    return np.int64(k)


@njit(cache=True)
def _next_crossing(k, o, d, res):
    if d > 0:
        return ((k + 1) * res - o) / d
    if d < 0:
        return (k * res - o) / d
    return np.inf


@njit(cache=True)
def walk(ox, oy, oz, dx, dy, dz, t_max, res, out):
    """Write visited integer keys into ``out`` (n, 3); return how many."""
    kx = entry_key(ox, dx, res)
    ky = entry_key(oy, dy, res)
    kz = entry_key(oz, dz, res)
    sx = 1 if dx > 0 else -1
    sy = 1 if dy > 0 else -1
    sz = 1 if dz > 0 else -1
    cap = out.shape[0]
    n = 0
    while n < cap:
        out[n, 0] = kx
        out[n, 1] = ky
        out[n, 2] = kz
        n += 1
        tx = _next_crossing(kx, ox, dx, res)
        ty = _next_crossing(ky, oy, dy, res)
        tz = _next_crossing(kz, oz, dz, res)
        if tx <= ty and tx <= tz:
            if tx > t_max:
                break
            kx += sx
        elif ty <= tz:
            if ty > t_max:
                break
            ky += sy
        else:
            if tz > t_max:
                break
            kz += sz
    return n


def max_steps(t_max: float, direction, res: float) -> int:
    d = np.abs(np.asarray(direction, dtype=float))
    return int(np.ceil(t_max * d.sum() / res)) + 4


def traverse(origin, direction, t_max: float, res: float) -> np.ndarray:
    """Python-facing wrapper returning the (n, 3) key sequence."""
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    if not np.any(d):
        raise ValueError("direction must be nonzero")
    buf = np.empty((max_steps(t_max, d, res), 3), dtype=np.int64)
    n = walk(o[0], o[1], o[2], d[0], d[1], d[2], float(t_max), float(res), buf)
    return buf[:n].copy()

"""Front-to-back alpha compositing of isotropic 2D splats and its exact adjoint.

Splats arrive already sorted front to back. Per-pixel lists are built in that
order, so compositing is a single sequential pass per pixel. The forward pass
stores the transmittance in front of every (pixel, splat) pair, which the
backward pass uses to form

    dL/dalpha_i = T_i g_i - (sum_{k>i} w_k g_k) / (1 - alpha_i)

with ``g_i`` the upstream gradient dotted with splat i's channel values.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

ALPHA_MAX = 0.9999


@njit(cache=True)
def _bounds(u, v, rad, H, W):
    if math.isinf(rad):
        return 0, W - 1, 0, H - 1
    x0 = max(0, int(math.ceil(u - rad)))
    x1 = min(W - 1, int(math.floor(u + rad)))
    y0 = max(0, int(math.ceil(v - rad)))
    y1 = min(H - 1, int(math.floor(v + rad)))
    return x0, x1, y0, y1


@njit(cache=True)
def build_lists(us, vs, rad, H, W):
    n = us.shape[0]
    counts = np.zeros(H * W + 1, dtype=np.int64)
    for g in range(n):
        x0, x1, y0, y1 = _bounds(us[g], vs[g], rad[g], H, W)
        for y in range(y0, y1 + 1):
            for x in range(x0, x1 + 1):
                counts[y * W + x + 1] += 1
    offsets = np.cumsum(counts)
    fill = offsets[:-1].copy()
    pair_g = np.empty(offsets[-1], dtype=np.int64)
    for g in range(n):
        x0, x1, y0, y1 = _bounds(us[g], vs[g], rad[g], H, W)
        for y in range(y0, y1 + 1):
            for x in range(x0, x1 + 1):
                p = y * W + x
                pair_g[fill[p]] = g
                fill[p] += 1
    return offsets, pair_g


@njit(cache=True)
def forward(us, vs, sig, opac, zs, cols, sems, offsets, pair_g, H, W, t_min):
    C = sems.shape[1]
    color = np.zeros((H * W, 3))
    depth = np.zeros(H * W)
    sem = np.zeros((H * W, C))
    sil = np.zeros(H * W)
    m = pair_g.shape[0]
    pair_T = np.zeros(m)
    pair_a = np.zeros(m)
    n_used = np.zeros(H * W, dtype=np.int64)
    for p in range(H * W):
        px = p % W
        py = p // W
        T = 1.0
        k0 = offsets[p]
        k1 = offsets[p + 1]
        used = 0
        for k in range(k0, k1):
            if T < t_min:
                break
            g = pair_g[k]
            dx = px - us[g]
            dy = py - vs[g]
            a = opac[g] * math.exp(-(dx * dx + dy * dy) / (2.0 * sig[g] * sig[g]))
            if a > ALPHA_MAX:
                a = ALPHA_MAX
            w = a * T
            pair_T[k] = T
            pair_a[k] = a
            color[p, 0] += w * cols[g, 0]
            color[p, 1] += w * cols[g, 1]
            color[p, 2] += w * cols[g, 2]
            depth[p] += w * zs[g]
            for c in range(C):
                sem[p, c] += w * sems[g, c]
            sil[p] += w
            T *= 1.0 - a
            used += 1
        n_used[p] = used
    return color, depth, sem, sil, pair_T, pair_a, n_used


@njit(cache=True)
def backward(us, vs, sig, opac, zs, cols, sems, offsets, pair_g, pair_T, pair_a, n_used,
             H, W, g_color, g_depth, g_sem, g_sil):
    n = us.shape[0]
    C = sems.shape[1]
    d_u = np.zeros(n)
    d_v = np.zeros(n)
    d_sig = np.zeros(n)
    d_o = np.zeros(n)
    d_z = np.zeros(n)
    d_col = np.zeros((n, 3))
    d_sem = np.zeros((n, C))
    for p in range(H * W):
        used = n_used[p]
        if used == 0:
            continue
        px = p % W
        py = p // W
        gc0 = g_color[p, 0]
        gc1 = g_color[p, 1]
        gc2 = g_color[p, 2]
        gd = g_depth[p]
        gs = g_sil[p]
        suffix = 0.0
        k0 = offsets[p]
        for k in range(k0 + used - 1, k0 - 1, -1):
            g = pair_g[k]
            a = pair_a[k]
            T = pair_T[k]
            w = a * T
            val = gc0 * cols[g, 0] + gc1 * cols[g, 1] + gc2 * cols[g, 2] + gd * zs[g] + gs
            for c in range(C):
                val += g_sem[p, c] * sems[g, c]
                d_sem[g, c] += w * g_sem[p, c]
            d_col[g, 0] += w * gc0
            d_col[g, 1] += w * gc1
            d_col[g, 2] += w * gc2
            d_z[g] += w * gd
            d_a = T * val - suffix / (1.0 - a)
            suffix += w * val
            if a >= ALPHA_MAX:
                continue
            dx = px - us[g]
            dy = py - vs[g]
            s2 = sig[g] * sig[g]
            G = math.exp(-(dx * dx + dy * dy) / (2.0 * s2))
            d_o[g] += d_a * G
            d_u[g] += d_a * a * dx / s2
            d_v[g] += d_a * a * dy / s2
            d_sig[g] += d_a * a * (dx * dx + dy * dy) / (s2 * sig[g])
    return d_u, d_v, d_sig, d_o, d_z, d_col, d_sem

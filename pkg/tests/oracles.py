"""Slow, obviously-correct reference implementations used by the tests."""
from __future__ import annotations

import math

import numpy as np

from hortisplat.geometry import CameraModel
from hortisplat.perception import SemanticObservation
from hortisplat.planner.graph import build_graph
from hortisplat.planner.sampling import ViewKind, Viewpoint
from hortisplat.splat.gaussians import GaussianMap
from hortisplat.targets import ClusterConfig


# -- voxel traversal ---------------------------------------------------------------

def face_crossings(origin, direction, t_max, res):
    """Every t in (0, t_max) where the ray crosses a grid plane."""
    ts = []
    for a in range(3):
        d = direction[a]
        if d == 0:
            continue
        k0 = math.floor(origin[a] / res)
        k1 = math.floor((origin[a] + t_max * d) / res)
        for k in range(min(k0, k1), max(k0, k1) + 2):
            t = (k * res - origin[a]) / d
            if 0 < t < t_max:
                ts.append(t)
    return sorted(ts)


def dense_traversal(origin, direction, t_max, res, step=1e-3):
    """Keys of ``origin + t * direction`` sampled every ``step`` meters plus between face crossings.

    Dense sampling alone can miss a voxel the ray clips for less than a
    millimetre, so samples are added midway between consecutive crossings.
    Points on a face belong to the voxel being entered.
    """
    o = np.asarray(origin, dtype=float)
    d = np.asarray(direction, dtype=float)
    speed = float(np.linalg.norm(d))
    n = int(math.ceil(t_max * speed / step))
    ts = list(np.linspace(0.0, t_max, n + 1))
    cross = [0.0] + face_crossings(o, d, t_max, res) + [t_max]
    ts += [(a + b) / 2 for a, b in zip(cross[:-1], cross[1:])]
    ts = sorted(set(ts))
    keys = []
    for t in ts:
        p = o + t * d
        k = []
        for a in range(3):
            c = p[a] / res
            f = math.floor(c)
            if c == f and d[a] < 0:
                f -= 1
            k.append(int(f))
        if not keys or keys[-1] != tuple(k):
            keys.append(tuple(k))
    return keys


# -- clustering ------------------------------------------------------------------

def dbscan_reference(points, eps, min_samples):
    """O(n^2) DBSCAN with the same visiting order and border-point rule."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n == 0:
        return [], []
    D = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    nbrs = [list(np.nonzero(D[i] <= eps)[0]) for i in range(n)]
    core = [len(nb) >= min_samples for nb in nbrs]
    order = sorted(range(n), key=lambda i: (pts[i, 0], pts[i, 1], pts[i, 2], i))
    label = [-1] * n
    clusters = []
    for i in order:
        if label[i] >= 0 or not core[i]:
            continue
        cid = len(clusters)
        label[i] = cid
        members = {i}
        queue = [i]
        while queue:
            j = queue.pop()
            for k in nbrs[j]:
                if label[k] < 0:
                    label[k] = cid
                    members.add(k)
                    if core[k]:
                        queue.append(k)
        clusters.append(sorted(members))
    return clusters, [i for i in range(n) if label[i] < 0]


def partition(clusters):
    return sorted(tuple(sorted(int(x) for x in c)) for c in clusters)


def random_instance(rng):
    n = int(rng.integers(1, 301))
    k = int(rng.integers(1, 5))
    centers = rng.uniform(-0.2, 0.2, (k, 3))
    pts = centers[rng.integers(0, k, n)] + rng.normal(scale=rng.uniform(0.005, 0.03), size=(n, 3))
    if rng.random() < 0.3:
        pts = np.round(pts, 2)  # duplicates and exact-eps ties
    return pts, ClusterConfig(eps=float(rng.uniform(0.01, 0.04)), min_samples=int(rng.integers(1, 12)))


# -- planner ---------------------------------------------------------------------

def vp_with(gain, joints=None, kind=ViewKind.EXPLORATION):
    return Viewpoint(np.eye(4), kind, joints=joints, raw_gain=gain, gain=gain)


def random_graph(rng):
    n = int(rng.integers(1, 9))
    nodes = [vp_with(float(rng.uniform(0, 1)), tuple(rng.uniform(-1, 1, 2))) for _ in range(n)]
    return build_graph(nodes, int(rng.integers(1, 4))), rng.uniform(-1, 1, 2)


def best_first_reference(gains, joints, adj, start, beta, n_near):
    """Heap-free version of the expansion rule: scan for the best open node each step."""
    n = len(gains)
    J = np.asarray(joints, dtype=float)
    q0 = np.asarray(start, dtype=float)
    U = [-math.inf] * n
    pred = [None] * n
    done = [False] * n
    d0 = [float(np.linalg.norm(J[j] - q0)) for j in range(n)]
    first = sorted(range(n), key=lambda j: (d0[j], j))[:n_near]
    for j in first:
        U[j] = gains[j] - beta * d0[j]
        pred[j] = -1
    while True:
        open_ = [i for i in range(n) if not done[i] and U[i] > -math.inf]
        if not open_:
            break
        i = max(open_, key=lambda k: (U[k], -k))
        done[i] = True
        for j in sorted(adj[i]):
            if done[j]:
                continue
            u = U[i] + gains[j] - beta * float(np.linalg.norm(J[j] - J[i]))
            if u > U[j]:
                U[j], pred[j] = u, i
    best = max(range(n), key=lambda k: (U[k], -k))
    path = []
    k = best
    while k != -1:
        path.append(k)
        k = pred[k]
    return path[::-1], U[best]


def path_utility(path, gains, joints, start, beta):
    J = np.asarray(joints, dtype=float)
    prev = np.asarray(start, dtype=float)
    u = 0.0
    for k in path:
        u += gains[k] - beta * float(np.linalg.norm(J[k] - prev))
        prev = J[k]
    return u


def best_simple_path(gains, joints, adj, start, beta, n_near):
    """Maximum utility over every simple path leaving the start (an upper bound)."""
    n = len(gains)
    J = np.asarray(joints, dtype=float)
    q0 = np.asarray(start, dtype=float)
    first = sorted(range(n), key=lambda j: (float(np.linalg.norm(J[j] - q0)), j))[:n_near]
    best = -math.inf

    def dfs(path, u):
        nonlocal best
        best = max(best, u)
        for j in adj[path[-1]]:
            if j not in path:
                dfs(path + [j], u + gains[j] - beta * float(np.linalg.norm(J[j] - J[path[-1]])))

    for j in first:
        dfs([j], gains[j] - beta * float(np.linalg.norm(J[j] - q0)))
    return best


# -- metrics ---------------------------------------------------------------------

def brute_nn(P, Q):
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    return np.array([min(math.dist(p, q) for q in Q) for p in P])


def brute_chamfer(P, Q):
    return float(brute_nn(P, Q).mean() + brute_nn(Q, P).mean())


def brute_prf(P, Q, tau):
    p = float(np.mean(brute_nn(P, Q) < tau))
    r = float(np.mean(brute_nn(Q, P) < tau))
    return p, r, (2 * p * r / (p + r) if p + r > 0 else 0.0)


# -- splat gradient fixtures -----------------------------------------------------

TINY_CAM = CameraModel(8, 8, 8.0, 8.0, 3.5, 3.5, 0.05, 5.0)


def random_fixture(rng, max_splats=5):
    """Up to ``max_splats`` splats in front of an 8x8 camera and a random target frame."""
    n = int(rng.integers(1, max_splats + 1))
    g = GaussianMap()
    means = np.c_[rng.uniform(-0.3, 0.3, (n, 2)), rng.uniform(0.8, 1.5, n)]
    g.append(means, rng.uniform(0.1, 0.3, n), rng.uniform(0, 1, (n, 3)), rng.uniform(0.2, 0.9, n),
             rng.dirichlet(np.ones(3), n))
    obs = SemanticObservation(rng.uniform(0, 1, (8, 8, 3)), rng.uniform(0.8, 1.6, (8, 8)),
                              rng.integers(0, 3, (8, 8)), rng.uniform(0, 1, (8, 8)), np.eye(4), TINY_CAM)
    return g, obs


def central_difference(f, arr, idx, h=1e-4):
    old = arr[idx]
    arr[idx] = old + h
    lp = f()
    arr[idx] = old - h
    lm = f()
    arr[idx] = old
    return (lp - lm) / (2 * h)

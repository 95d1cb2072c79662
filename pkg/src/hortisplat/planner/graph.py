"""Candidate selection, joint-space neighbor graph and best-first sequencing."""
from __future__ import annotations

import heapq
import json
from dataclasses import dataclass

import numpy as np

from ..geometry import ConfigError
from .sampling import Viewpoint


@dataclass(frozen=True)
class PlannerConfig:
    top_k: int = 20
    n_near: int = 4
    k_exec: int = 4
    beta: float = 0.05

    def __post_init__(self):
        if min(self.top_k, self.n_near, self.k_exec) < 1:
            raise ConfigError("planner counts must be at least 1")
        if self.k_exec > self.top_k:
            raise ConfigError("k_exec must not exceed top_k")
        if self.beta < 0:
            raise ConfigError("beta must be non-negative")


def normalize_and_select(exploit: list[Viewpoint], explore: list[Viewpoint], top_k: int) -> list[Viewpoint]:
    """Scale each subset by its own max raw gain, merge, keep the top_k.

    Ties keep merge order (exploitation first, then candidate order), which is
    also the fallback when every gain is zero.
    """
    merged = []
    for subset in (exploit, explore):
        if not subset:
            continue
        mx = max(vp.raw_gain for vp in subset)
        for vp in subset:
            merged.append(vp.with_(gain=vp.raw_gain / mx if mx > 0 else 0.0))
    order = sorted(range(len(merged)), key=lambda i: (-merged[i].gain, i))
    return [merged[i] for i in order[:top_k]]


@dataclass
class ViewGraph:
    nodes: list[Viewpoint]
    joints: np.ndarray
    adj: list[set[int]]

    def __len__(self) -> int:
        return len(self.nodes)

    def edges(self) -> set[tuple[int, int]]:
        return {(i, j) for i, nb in enumerate(self.adj) for j in nb if i < j}


def _nearest(joints: np.ndarray, q: np.ndarray, k: int, exclude: int = -1) -> list[int]:
    d = np.linalg.norm(joints - q, axis=1)
    order = [int(i) for i in np.lexsort((np.arange(len(d)), d)) if i != exclude]
    return order[:k]


def build_graph(viewpoints: list[Viewpoint], n_near: int) -> ViewGraph:
    if any(vp.joints is None for vp in viewpoints):
        raise ValueError("graph nodes must be feasible (joints set)")
    J = np.array([vp.joints for vp in viewpoints], dtype=float).reshape(len(viewpoints), -1)
    adj: list[set[int]] = [set() for _ in viewpoints]
    for i in range(len(viewpoints)):
        for j in _nearest(J, J[i], n_near, exclude=i):
            adj[i].add(j)
            adj[j].add(i)
    return ViewGraph(list(viewpoints), J, adj)


@dataclass
class Plan:
    order: list[int]
    utility: float
    utilities: np.ndarray

    def viewpoints(self, graph: ViewGraph) -> list[Viewpoint]:
        return [graph.nodes[i] for i in self.order]


def best_first_search(graph: ViewGraph, start_joints, beta: float = 0.05, n_near: int = 4) -> Plan:
    """Label-setting best-first expansion from a virtual start node of utility 0.

    The start links to its ``n_near`` nearest nodes. Popping the highest
    utility node (ties: lowest index) expands it once; an unexpanded neighbor
    takes ``U[pred] + gain - beta * |q_pred - q|`` if that improves it. The
    returned path backtracks from the reached node with the largest utility.
    """
    n = len(graph)
    if n == 0:
        return Plan([], 0.0, np.zeros(0))
    q0 = np.asarray(start_joints, dtype=float)
    gain = np.array([vp.gain for vp in graph.nodes])
    U = np.full(n, -np.inf)
    pred = np.full(n, -2, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    heap: list[tuple[float, int]] = []
    for j in _nearest(graph.joints, q0, n_near):
        u = gain[j] - beta * float(np.linalg.norm(graph.joints[j] - q0))
        if u > U[j]:
            U[j], pred[j] = u, -1
            heapq.heappush(heap, (-u, j))
    while heap:
        _, i = heapq.heappop(heap)
        if done[i]:
            continue
        done[i] = True
        for j in sorted(graph.adj[i]):
            if done[j]:
                continue
            u = U[i] + gain[j] - beta * float(np.linalg.norm(graph.joints[j] - graph.joints[i]))
            if u > U[j]:
                U[j], pred[j] = u, i
                heapq.heappush(heap, (-u, j))
    best = int(np.argmax(U))
    path = []
    k = best
    while k >= 0:
        path.append(k)
        k = int(pred[k])
    return Plan(path[::-1], float(U[best]), U)


def best_first_plan(graph: ViewGraph, start_joints, k_exec: int = 4, beta: float = 0.05,
                    n_near: int = 4) -> list[Viewpoint]:
    plan = best_first_search(graph, start_joints, beta, n_near)
    return plan.viewpoints(graph)[:k_exec]


def dump_plan(plan: list[Viewpoint], path) -> None:
    with open(path, "w") as fh:
        json.dump([vp.to_dict() for vp in plan], fh, indent=2)


def dump_candidates(viewpoints: list[Viewpoint], path) -> None:
    dump_plan(viewpoints, path)

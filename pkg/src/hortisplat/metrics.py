"""Reconstruction and phenotyping metrics, runtime breakdown and report I/O."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import ConfigError, UndefinedMetricError

RUNTIME_CATEGORIES = ("octomap_mapping", "gs_mapping", "planning", "execution")
BRUTE_FORCE_LIMIT = 64


@dataclass(frozen=True)
class EvalConfig:
    tau: float = 0.015
    gt_surface_density: float = 1e5

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError("tau must be positive")
        if not self.gt_surface_density > 0:
            raise ConfigError("gt_surface_density must be positive")


def _check(*clouds):
    for c in clouds:
        if len(c) == 0:
            raise UndefinedMetricError("metric undefined for an empty point cloud")


def nn_distances(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Distance from each point of ``src`` to its nearest neighbor in ``dst``."""
    src = np.asarray(src, dtype=float).reshape(-1, 3)
    dst = np.asarray(dst, dtype=float).reshape(-1, 3)
    if len(dst) <= BRUTE_FORCE_LIMIT:
        return np.sqrt(((src[:, None, :] - dst[None, :, :]) ** 2).sum(-1)).min(axis=1)
    return cKDTree(dst).query(src)[0]


def chamfer_distance(P, Q) -> float:
    _check(P, Q)
    return float(nn_distances(P, Q).mean() + nn_distances(Q, P).mean())


def precision_recall_f1(P, Q, tau: float) -> tuple[float, float, float]:
    _check(P, Q)
    prec = float(np.mean(nn_distances(P, Q) < tau))
    rec = float(np.mean(nn_distances(Q, P) < tau))
    f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
    return prec, rec, f1


def volume_accuracy(v_est: float, v_gt: float) -> float:
    if v_gt <= 0:
        raise UndefinedMetricError("ground-truth volume must be positive")
    return 100.0 * v_est / v_gt


def count_accuracy(n_est: int, n_gt: int) -> float:
    if n_gt <= 0:
        raise UndefinedMetricError("ground-truth count must be positive")
    return 100.0 * n_est / n_gt


@dataclass
class TimingLog:
    spans: list[tuple[str, float]] = field(default_factory=list)

    def add(self, category: str, seconds: float) -> None:
        if category not in RUNTIME_CATEGORIES:
            raise ValueError(f"unknown runtime category {category!r}")
        self.spans.append((category, float(seconds)))


def runtime_report(log: TimingLog | list[tuple[str, float]]) -> dict[str, float]:
    """Per-category sums; ``gs_mapping_critical`` is the part not hidden behind other work.

    Splat mapping can overlap with planning and execution of the same step;
    when run serially its critical-path share is modeled as the excess over
    the time spent planning and executing.
    """
    spans = log.spans if isinstance(log, TimingLog) else list(log)
    out = {c: 0.0 for c in RUNTIME_CATEGORIES}
    for cat, s in spans:
        out[cat] += s
    out["total"] = sum(out[c] for c in RUNTIME_CATEGORIES)
    out["gs_mapping_critical"] = max(0.0, out["gs_mapping"] - out["planning"] - out["execution"])
    return out


@dataclass
class MetricsReport:
    method: str
    scene_seed: int
    noise_p: float
    row_id: int
    chamfer: float | None = None
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    count: int = 0
    gt_count: int = 0
    count_accuracy_pct: float | None = None
    volume: float = 0.0
    gt_volume_analytic: float = 0.0
    gt_volume_hull: float = 0.0
    volume_accuracy_pct: float | None = None
    volume_accuracy_hull_pct: float | None = None
    n_points: int = 0
    n_views: int = 0
    peak_splats: int = 0
    checkpoint_bytes: int = 0
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(recon: np.ndarray, gt_cloud, count: int, volume: float, gt_hull_volume: float,
             cfg: EvalConfig, **meta) -> MetricsReport:
    """Fill a report; undefined metrics are left as ``None`` with a note."""
    rep = MetricsReport(**meta)
    rep.count, rep.volume, rep.n_points = int(count), float(volume), int(len(recon))
    rep.gt_count = int(gt_cloud.count)
    rep.gt_volume_analytic = float(gt_cloud.total_volume)
    rep.gt_volume_hull = float(gt_hull_volume)
    try:
        rep.chamfer = chamfer_distance(recon, gt_cloud.points)
        rep.precision, rep.recall, rep.f1 = precision_recall_f1(recon, gt_cloud.points, cfg.tau)
    except UndefinedMetricError as e:
        rep.notes.append(f"reconstruction: {e}")
    try:
        rep.count_accuracy_pct = count_accuracy(count, rep.gt_count)
        rep.volume_accuracy_pct = volume_accuracy(volume, rep.gt_volume_analytic)
        rep.volume_accuracy_hull_pct = volume_accuracy(volume, rep.gt_volume_hull)
    except UndefinedMetricError as e:
        rep.notes.append(f"phenotyping: {e}")
    return rep


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def save_json(reports: list[MetricsReport] | list[dict], path) -> None:
    rows = [r.to_dict() if isinstance(r, MetricsReport) else r for r in reports]
    rows = [{k: _clean(v) for k, v in r.items()} for r in rows]
    with open(path, "w") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)
        fh.write("\n")


CSV_FIELDS = ("scene_seed", "method", "noise_p", "row_id", "chamfer", "precision", "recall", "f1",
              "count", "gt_count", "count_accuracy_pct", "volume", "gt_volume_analytic",
              "gt_volume_hull", "volume_accuracy_pct", "volume_accuracy_hull_pct",
              "n_points", "n_views", "peak_splats", "checkpoint_bytes")


def save_csv(reports: list[MetricsReport] | list[dict], path, fields=CSV_FIELDS) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fields), extrasaction="ignore")
        w.writeheader()
        for r in reports:
            w.writerow(r.to_dict() if isinstance(r, MetricsReport) else r)


def aggregate(rows: list[dict], keys=("method", "noise_p"),
              fields=("chamfer", "precision", "recall", "f1", "count_accuracy_pct", "volume_accuracy_pct")) -> list[dict]:
    """Mean and population std per group, ignoring undefined values."""
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    out = []
    for key in sorted(groups, key=lambda k: tuple(str(x) for x in k)):
        g = groups[key]
        row = dict(zip(keys, key))
        row["n"] = len(g)
        for f in fields:
            vals = [r[f] for r in g if r.get(f) is not None]
            row[f + "_mean"] = float(np.mean(vals)) if vals else None
            row[f + "_std"] = float(np.std(vals)) if vals else None
        out.append(row)
    return out

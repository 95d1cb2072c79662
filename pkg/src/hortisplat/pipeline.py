"""Active mapping loop over one crop row, plus multi-run experiments."""
from __future__ import annotations

import dataclasses
import logging
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .classes import TARGET_CLASS
from .config import BASELINE_METHODS, ExperimentConfig
from .geometry import invert_pose, look_at, make_pose
from .metrics import MetricsReport, TimingLog, evaluate, runtime_report
from .octomap import SemanticOctomap
from .perception import corrupt_labels
from .planner.arm import Workspace, default_arm, project_to_reachable, reachable_workspace
from .planner.gains import GainEvaluator
from .planner.graph import best_first_plan, build_graph, normalize_and_select
from .planner.sampling import (ViewKind, Viewpoint, ViewStatus, is_duplicate, row_normal,
                               sample_exploitation, sample_exploration)
from .scene import Scene, generate_scene, ground_truth_fruit_cloud, render_ground_truth
from .splat.checkpoint import HEADER as CKPT_HEADER
from .splat.checkpoint import RECORD as CKPT_RECORD
from .splat.densify import densify, prune
from .splat.gaussians import GaussianMap
from .splat.optim import optimize
from .targets import ClusterConfig, ConvexHull3D, FruitCluster, cluster_points, extract_target_points

log = logging.getLogger(__name__)

MAP_MARGIN = 0.35


def waypoint_fractions(n: int) -> list[float]:
    return [(i + 0.5) / n for i in range(n)]


@dataclass
class Waypoint:
    index: int
    side: int
    base_pose: np.ndarray
    canonical_pose: np.ndarray


def plan_waypoints(row, cfg: ExperimentConfig) -> list[Waypoint]:
    """Left side in travel order, turn, then the right side back."""
    start = np.asarray(row.start, dtype=float)
    normal = row_normal(row)
    out = []
    fr = waypoint_fractions(cfg.waypoints_per_side)
    for side, fractions in ((1, fr), (-1, fr[::-1])):
        for f in fractions:
            on_row = start + f * row.length * row.axis
            facing = -side * normal
            base = on_row + side * cfg.standoff * normal
            base[2] = cfg.mount_height
            R = np.stack([facing, np.cross([0.0, 0.0, 1.0], facing), [0.0, 0.0, 1.0]], axis=1)
            eye = on_row + side * cfg.canonical_distance * normal
            eye[2] = cfg.canonical_height
            target = on_row.copy()
            target[2] = cfg.canonical_height
            out.append(Waypoint(len(out), side, make_pose(R, base), look_at(eye, target)))
    return out


def map_bounds(scene: Scene, cfg: ExperimentConfig) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = scene.bounds()
    reach = default_arm(cfg.arm_steps).reach
    lo = lo - [MAP_MARGIN, cfg.standoff + reach - scene.config.row_spacing / 2, 0.0]
    hi = hi + [MAP_MARGIN, cfg.standoff + reach - scene.config.row_spacing / 2, MAP_MARGIN]
    lo[2] = 0.0
    return lo, hi


def frame_seed(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


@dataclass
class RowResult:
    report: MetricsReport
    timing: dict[str, float]
    gmap: GaussianMap | None
    omap: SemanticOctomap
    recon: np.ndarray
    gt_points: np.ndarray
    clusters: list[FruitCluster]
    executed: list[Viewpoint] = field(default_factory=list)
    skipped_waypoints: list[int] = field(default_factory=list)


_WORKSPACES: dict[int, Workspace] = {}


def _workspace(steps: int) -> Workspace:
    if steps not in _WORKSPACES:
        _WORKSPACES[steps] = reachable_workspace(default_arm(steps))
    return _WORKSPACES[steps]


class RowRunner:
    """State of one active-mapping run over a single row."""

    def __init__(self, scene: Scene, row_id: int, cfg: ExperimentConfig, seed: int = 0):
        self.scene = scene
        self.row = scene.rows[row_id]
        self.row_id = row_id
        self.cfg = cfg
        self.seed = seed
        self.cam = cfg.camera
        lo, hi = map_bounds(scene, cfg)
        if cfg.is_hybrid:
            ocfg = cfg.octomap
            self.gmap: GaussianMap | None = GaussianMap()
            self.cluster_cfg = cfg.cluster
        else:
            res = BASELINE_METHODS[cfg.method]
            ocfg = dataclasses.replace(cfg.octomap, resolution=res)
            self.gmap = None
            self.cluster_cfg = ClusterConfig(eps=2.0 * res, min_samples=cfg.cluster.min_samples)
        self.omap = SemanticOctomap(ocfg, lo, hi)
        self.timing = TimingLog()
        self.executed: list[Viewpoint] = []
        self.peak_splats = 0
        self.ws_base = _workspace(cfg.arm_steps)
        self.optim_cfg = dataclasses.replace(cfg.optim, use_confidence=cfg.use_confidence,
                                             max_depth=cfg.densify.max_depth)

    # -- sensing and mapping --------------------------------------------------
    def observe(self, c2w: np.ndarray, wp: int, view: int):
        gt = render_ground_truth(self.scene, invert_pose(c2w), self.cam)
        return corrupt_labels(gt, self.cfg.noise,
                              seed=frame_seed(self.cfg.noise.rng_seed, self.seed, self.row_id, wp, view))

    def integrate(self, obs, wp: int, view: int) -> None:
        t = time.perf_counter()
        self.omap.insert_observation(obs)
        self.timing.add("octomap_mapping", time.perf_counter() - t)
        if self.gmap is None:
            return
        t = time.perf_counter()
        rng = np.random.default_rng(frame_seed(self.cfg.noise.rng_seed, self.seed, self.row_id, wp, view, 1))
        g, _ = densify(self.gmap, obs, self.cfg.densify, rng, cutoff_sigma=self.optim_cfg.cutoff_sigma)
        self.peak_splats = max(self.peak_splats, len(g))
        g, _ = optimize(g, obs, self.cfg.loss, self.optim_cfg)
        self.gmap = prune(g)
        self.timing.add("gs_mapping", time.perf_counter() - t)

    # -- targets ----------------------------------------------------------------
    def target_points(self) -> np.ndarray:
        if self.gmap is not None:
            return extract_target_points(self.gmap, TARGET_CLASS)
        return self.omap.occupied_centers(TARGET_CLASS)

    def clusters(self) -> list[FruitCluster]:
        pts = self.target_points()
        return cluster_points(pts, self.cluster_cfg) if len(pts) else []

    # -- planning -----------------------------------------------------------------
    def candidates(self, wp: Waypoint, ws: Workspace) -> tuple[list[Viewpoint], list[Viewpoint]]:
        cfg = self.cfg
        clusters = [] if cfg.exploration_only else self.clusters()
        exploit = sample_exploitation([c.centroid for c in clusters], cfg.sampling)
        explore = sample_exploration(self.row, cfg.sampling, side=wp.side)
        out = []
        for subset in (exploit, explore):
            feas = []
            for vp in subset:
                p = project_to_reachable(vp, ws, cfg.max_slide, cfg.reach_tol)
                if p is not None and not is_duplicate(p, self.executed):
                    feas.append(p)
            out.append(feas)
        return out[0], out[1]

    def plan(self, wp: Waypoint, ws: Workspace, joints) -> list[Viewpoint]:
        cfg = self.cfg
        exploit, explore = self.candidates(wp, ws)
        ge = GainEvaluator(self.omap, self.cam, cfg.gain_stride)
        exploit = [vp.with_(raw_gain=ge.osamcep(vp.pose)) for vp in exploit]
        explore = [vp.with_(raw_gain=ge.uvc(vp.pose)) for vp in explore]
        selected = normalize_and_select(exploit, explore, cfg.planner.top_k)
        if not selected:
            return []
        graph = build_graph(selected, cfg.planner.n_near)
        return best_first_plan(graph, joints, cfg.planner.k_exec, cfg.planner.beta, cfg.planner.n_near)

    # -- main loop ---------------------------------------------------------------
    def run(self) -> list[int]:
        cfg = self.cfg
        skipped = []
        for wp in plan_waypoints(self.row, cfg):
            ws = self.ws_base.placed(wp.base_pose)
            t = time.perf_counter()
            start = project_to_reachable(Viewpoint(wp.canonical_pose, ViewKind.EXPLORATION), ws,
                                         cfg.max_slide, cfg.reach_tol)
            pose = wp.canonical_pose if start is None else start.pose
            joints = np.zeros(default_arm(cfg.arm_steps).n_joints) if start is None else np.array(start.joints)
            ok = self.omap.collision_free(pose[:3, 3], pose[:3, 3], cfg.robot_radius)
            self.timing.add("execution", time.perf_counter() - t)
            if not ok:
                log.warning("waypoint %d: canonical pose in collision, skipped", wp.index)
                skipped.append(wp.index)
                continue
            t = time.perf_counter()
            obs = self.observe(pose, wp.index, 0)
            self.timing.add("execution", time.perf_counter() - t)
            self.integrate(obs, wp.index, 0)
            view = 1
            done = 0
            for _ in range(cfg.max_rounds_per_waypoint):
                if done >= cfg.max_viewpoints_per_waypoint:
                    break
                t = time.perf_counter()
                plan = self.plan(wp, ws, joints)
                self.timing.add("planning", time.perf_counter() - t)
                if not plan:
                    break
                for vp in plan:
                    if done >= cfg.max_viewpoints_per_waypoint:
                        break
                    t = time.perf_counter()
                    free = self.omap.collision_free(pose[:3, 3], vp.position, cfg.robot_radius)
                    if not free:
                        self.timing.add("execution", time.perf_counter() - t)
                        continue
                    obs = self.observe(vp.pose, wp.index, view)
                    self.timing.add("execution", time.perf_counter() - t)
                    self.integrate(obs, wp.index, view)
                    self.executed.append(vp.with_(status=ViewStatus.EXECUTED))
                    pose, joints = vp.pose, np.array(vp.joints)
                    view += 1
                    done += 1
        return skipped


def gt_hull_volume(gt) -> float:
    total = 0.0
    for iid in np.unique(gt.instance_ids):
        total += ConvexHull3D(gt.points[gt.instance_ids == iid]).volume
    return total


def run_row(scene: Scene, row_id: int, cfg: ExperimentConfig, seed: int = 0) -> RowResult:
    runner = RowRunner(scene, row_id, cfg, seed)
    skipped = runner.run()
    clusters = runner.clusters()
    recon = runner.target_points()
    gt = ground_truth_fruit_cloud(scene, cfg.eval.gt_surface_density, row_id)
    report = evaluate(
        recon, gt, len(clusters), sum(c.hull_volume for c in clusters), gt_hull_volume(gt), cfg.eval,
        method=cfg.label, scene_seed=int(scene.config.rng_seed), noise_p=float(cfg.noise.p_correct), row_id=row_id,
    )
    report.n_views = len(runner.executed)
    report.peak_splats = runner.peak_splats
    if runner.gmap is not None:
        report.checkpoint_bytes = checkpoint_size(runner.gmap)
    if skipped:
        report.notes.append(f"skipped waypoints: {skipped}")
    return RowResult(report, runtime_report(runner.timing), runner.gmap, runner.omap, recon, gt.points,
                     clusters, runner.executed, skipped)


def checkpoint_size(gmap: GaussianMap) -> int:
    return struct.calcsize(CKPT_HEADER) + len(gmap) * CKPT_RECORD.itemsize


def scene_for_seed(cfg: ExperimentConfig, seed: int) -> Scene:
    return generate_scene(dataclasses.replace(cfg.scene, rng_seed=seed))


def cell_config(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    """Per-seed config: the noise stream is keyed by the scene seed as well."""
    return cfg.replace(noise=dataclasses.replace(cfg.noise, rng_seed=frame_seed(cfg.noise.rng_seed, seed)))

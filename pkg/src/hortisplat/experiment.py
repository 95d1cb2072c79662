"""Experiment grid (seeds x variants x rows) and artifact export."""
from __future__ import annotations

import dataclasses
import json
import logging
import traceback
from dataclasses import dataclass, field
from pathlib import Path

from .config import ExperimentConfig, save_config
from .metrics import CSV_FIELDS, aggregate, save_csv, save_json
from .pipeline import RowResult, cell_config, run_row, scene_for_seed
from .plyio import write_ply
from .scene import save_scene
from .splat.checkpoint import export_ply as export_splat_ply
from .splat.checkpoint import save_checkpoint
from .targets import export_clusters_ply

log = logging.getLogger(__name__)

AGG_KEYS = ("method", "noise_p")


@dataclass
class CellResult:
    config: ExperimentConfig
    seed: int
    row_id: int
    result: RowResult | None = None
    error: str | None = None

    @property
    def key(self) -> str:
        return f"{self.config.hash()}/seed{self.seed}_row{self.row_id}"


@dataclass
class ExperimentResult:
    cells: list[CellResult] = field(default_factory=list)

    @property
    def rows(self) -> list[dict]:
        return [c.result.report.to_dict() for c in self.cells if c.result is not None]

    @property
    def failures(self) -> list[CellResult]:
        return [c for c in self.cells if c.error is not None]

    def table(self) -> list[dict]:
        return aggregate(self.rows, AGG_KEYS)


def expand_variants(cfg: ExperimentConfig, methods=None, noise_levels=None, ablations=None) -> list[ExperimentConfig]:
    """Cross product of methods, noise levels and ablation switch sets.

    ``ablations`` is a list of dicts accepted by ``with_ablation``; ablations
    only apply to the hybrid method.
    """
    methods = [cfg.method] if methods is None else list(methods)
    noise_levels = [cfg.noise.p_correct] if noise_levels is None else list(noise_levels)
    ablations = [{}] if ablations is None else list(ablations)
    out = []
    for p in noise_levels:
        for m in methods:
            base = cfg.replace(method=m, noise=dataclasses.replace(cfg.noise, p_correct=float(p)))
            for ab in (ablations if base.is_hybrid else [{}]):
                v = base.with_ablation(**ab)
                if v not in out:
                    out.append(v)
    return out


def run_experiment(cfg: ExperimentConfig, variants: list[ExperimentConfig] | None = None,
                   out_dir=None) -> ExperimentResult:
    """Run every (seed, variant, row) cell; failures are recorded and the grid continues."""
    variants = [cfg] if variants is None else variants
    out_dir = cfg.output_dir if out_dir is None else out_dir
    res = ExperimentResult()
    for seed in cfg.seeds:
        scene = scene_for_seed(cfg, seed)
        rows = cfg.rows or tuple(r.row_id for r in scene.rows)
        for v in variants:
            cc = cell_config(v, seed)
            for row_id in rows:
                cell = CellResult(v, seed, row_id)
                try:
                    cell.result = run_row(scene, row_id, cc, seed)
                    log.info("%s seed %d row %d: f1=%s", v.label, seed, row_id, cell.result.report.f1)
                except Exception as e:  # noqa: BLE001 - keep the grid running
                    cell.error = f"{type(e).__name__}: {e}"
                    log.error("cell %s failed: %s\n%s", cell.key, cell.error, traceback.format_exc())
                res.cells.append(cell)
                if out_dir is not None and cell.result is not None:
                    export_cell(cell, scene, out_dir)
    if out_dir is not None:
        export_summary(res, out_dir)
    return res


def _prepare(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"output directory {path} is not writable: {e}") from e
    return path


def export_cell(cell: CellResult, scene, out_dir) -> dict[str, Path]:
    """Write one cell's artifacts under ``<out>/<config hash>/``; returns the paths."""
    r = cell.result
    d = _prepare(Path(out_dir) / cell.config.hash())
    stem = f"seed{cell.seed}_row{cell.row_id}"
    paths = {
        "config": d / "config.json",
        "scene": d / f"seed{cell.seed}_scene.json",
        "metrics_json": d / f"{stem}_metrics.json",
        "metrics_csv": d / f"{stem}_metrics.csv",
        "timing": d / f"{stem}_timing.json",
        "recon_ply": d / f"{stem}_recon.ply",
        "gt_ply": d / f"{stem}_gt.ply",
        "octomap_ply": d / f"{stem}_octomap.ply",
        "clusters_ply": d / f"{stem}_clusters.ply",
    }
    save_config(cell.config, paths["config"])
    save_scene(scene, paths["scene"])
    save_json([r.report], paths["metrics_json"])
    save_csv([r.report], paths["metrics_csv"])
    with open(paths["timing"], "w") as fh:
        json.dump(r.timing, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_ply(paths["recon_ply"], r.recon)
    write_ply(paths["gt_ply"], r.gt_points)
    r.omap.export_ply(paths["octomap_ply"])
    export_clusters_ply(r.recon, r.clusters, paths["clusters_ply"])
    if r.gmap is not None:
        paths["checkpoint"] = d / f"{stem}_splats.bin"
        paths["splat_ply"] = d / f"{stem}_splats.ply"
        save_checkpoint(r.gmap, paths["checkpoint"])
        export_splat_ply(r.gmap, paths["splat_ply"])
    return paths


def export_summary(res: ExperimentResult, out_dir) -> None:
    d = _prepare(Path(out_dir))
    save_json(res.rows, d / "results.json")
    save_csv(res.rows, d / "results.csv", CSV_FIELDS)
    table = res.table()
    save_json(table, d / "summary.json")
    if table:
        save_csv(table, d / "summary.csv", tuple(table[0]))
    with open(d / "failures.json", "w") as fh:
        json.dump([{"key": c.key, "error": c.error} for c in res.failures], fh, indent=2)
        fh.write("\n")

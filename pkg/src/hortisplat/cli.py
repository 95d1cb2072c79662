"""Command line entry point: generate-scene, run, ablate, report."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .config import METHODS, ExperimentConfig, load_config
from .geometry import ConfigError
from .metrics import aggregate, save_csv, save_json
from .scene import generate_scene, save_scene

ABLATIONS = {
    "full": {},
    "no-conf": {"no_confidence": True},
    "explor-only": {"exploration_only": True},
    "no-downsample": {"no_downsample": True},
}


def apply_overrides(cfg: ExperimentConfig, overrides: list[str]) -> ExperimentConfig:
    """Apply ``dotted.key=value`` overrides; values parse as JSON, falling back to strings."""
    doc = cfg.to_dict()
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} must look like key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = doc
        parts = key.split(".")
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise ConfigError(f"unknown config section {p!r} in {key!r}")
            node = node[p]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key {key!r}")
        node[parts[-1]] = value
    return ExperimentConfig.from_dict(doc)


def build_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg = apply_overrides(cfg, args.set or [])
    kw = {}
    if args.seeds is not None:
        kw["seeds"] = tuple(args.seeds)
    if args.rows is not None:
        kw["rows"] = tuple(args.rows)
    if getattr(args, "out", None) is not None:
        kw["output_dir"] = str(args.out)
    return cfg.replace(**kw) if kw else cfg


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="experiment config JSON")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field (repeatable)")
    p.add_argument("--seeds", type=int, nargs="+", help="scene seeds")
    p.add_argument("--rows", type=int, nargs="+", help="row ids (default: all rows)")
    p.add_argument("--noise", type=float, nargs="+", help="label-correct probabilities P")
    p.add_argument("--out", type=Path, help="output directory")


def _print_table(rows: list[dict]) -> None:
    for r in rows:
        parts = [f"{r['method']:<32}", f"P={r['noise_p']:.2f}", f"n={r['n']}"]
        for f in ("f1", "precision", "recall", "chamfer", "count_accuracy_pct", "volume_accuracy_pct"):
            m, s = r.get(f + "_mean"), r.get(f + "_std")
            parts.append(f"{f}=" + ("n/a" if m is None else f"{m:.4g}±{s:.2g}"))
        print("  ".join(parts))


def cmd_generate_scene(args) -> int:
    cfg = build_config(args)
    seed = args.seeds[0] if args.seeds else cfg.seeds[0]
    scene = generate_scene(dataclasses.replace(cfg.scene, rng_seed=seed))
    out = args.out or Path(f"scene_{seed}.json")
    if out.suffix != ".json":
        out.mkdir(parents=True, exist_ok=True)
        out = out / f"scene_{seed}.json"
    save_scene(scene, out)
    print(f"wrote {out}: {len(scene.rows)} rows, {scene.plant_count()} plants, {len(scene.fruits)} fruits")
    return 0


def _run(cfg: ExperimentConfig, variants) -> int:
    from .experiment import run_experiment

    res = run_experiment(cfg, variants)
    _print_table(res.table())
    for c in res.failures:
        print(f"FAILED {c.key}: {c.error}", file=sys.stderr)
    if cfg.output_dir:
        print(f"results in {cfg.output_dir}")
    return 1 if res.failures else 0


def cmd_run(args) -> int:
    from .experiment import expand_variants

    cfg = build_config(args)
    ab = {"no_confidence": args.no_confidence, "exploration_only": args.exploration_only,
          "no_downsample": args.no_downsample}
    variants = expand_variants(cfg, args.method, args.noise, [ab])
    return _run(cfg, variants)


def cmd_ablate(args) -> int:
    from .experiment import expand_variants

    cfg = build_config(args)
    sets = [ABLATIONS[a] for a in args.variants]
    variants = expand_variants(cfg, ["hybrid"], args.noise, sets)
    return _run(cfg, variants)


def cmd_report(args) -> int:
    rows = []
    for path in args.results:
        path = Path(path)
        files = sorted(path.rglob("*_metrics.json")) if path.is_dir() else [path]
        for f in files:
            with open(f) as fh:
                rows.extend(json.load(fh))
    if not rows:
        print("no results found", file=sys.stderr)
        return 1
    table = aggregate(rows, ("method", "noise_p"))
    _print_table(table)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        save_json(table, args.out / "summary.json")
        save_csv(table, args.out / "summary.csv", tuple(table[0]))
    return 0


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hortisplat", description="Hybrid semantic mapping experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-scene", help="generate a procedural scene and save it as JSON")
    _common(p)
    p.set_defaults(func=cmd_generate_scene)

    p = sub.add_parser("run", help="run the active mapping loop")
    _common(p)
    p.add_argument("--method", nargs="+", choices=METHODS, help="methods to run")
    p.add_argument("--no-confidence", action="store_true", help="confidence fixed to 1 in the semantic loss")
    p.add_argument("--exploration-only", action="store_true", help="drop exploitation viewpoints")
    p.add_argument("--no-downsample", action="store_true", help="keep every non-target candidate pixel")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="run the hybrid ablation set")
    _common(p)
    p.add_argument("--variants", nargs="+", choices=list(ABLATIONS), default=["full", "no-conf", "explor-only"])
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="aggregate metrics files into mean/std tables")
    p.add_argument("results", nargs="+", help="result directories or metrics JSON files")
    p.add_argument("--out", type=Path, help="write summary.json/csv here")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

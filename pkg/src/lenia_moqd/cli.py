"""Command-line harness: run experiments, compare modes, render phenotypes.

Exit codes: 0 success, 1 runtime failure, 2 configuration error,
3 lookup error (unknown individual id).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import traceback
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import ConfigError, canonical_config_hash, load_config
from .core import simulate
from .engine import run_trial
from .frames import write_frame_pngs, write_lenf
from .metrics import (
    DESK_SCALE_NOTE,
    build_comparison,
    check_compatible_configs,
    summarize_trial,
    write_comparison_report,
)
from .repertoire import load_repertoire

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_LOOKUP = 3


class LookupFailure(KeyError):
    """Requested individual not present in the checkpoint."""


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _parse_seeds(raw: str):
    try:
        seeds = [int(s) for s in raw.split(",") if s.strip() != ""]
    except ValueError:
        raise ConfigError(f"--seeds must be comma-separated integers, got {raw!r}")
    if not seeds:
        raise ConfigError("--seeds is empty")
    return seeds


def _write_manifest(path: Path, manifest: dict) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")


def cmd_evolve(args) -> int:
    config = load_config(args.config)
    seeds = _parse_seeds(args.seeds)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    mode = args.mode or config.fitness_mode
    manifest = {
        "config_hash": canonical_config_hash(args.config),
        "code_version": __version__,
        "mode": mode,
        "seeds": seeds,
        "trials": {},
        "started_at": _utc_now(),
        "finished_at": None,
        "status": "running",
    }
    manifest_path = out_dir / "manifest.json"
    _write_manifest(manifest_path, manifest)
    try:
        for seed in seeds:
            trial_config = dataclasses.replace(config, seed=seed, fitness_mode=mode)
            trial_dir = out_dir / f"{mode}_seed{seed:04d}"
            paths = run_trial(trial_config, trial_dir)
            _plot_trajectory(paths["generations_csv"], trial_dir / "trajectory.png")
            manifest["trials"][str(seed)] = str(trial_dir)
            _write_manifest(manifest_path, manifest)
    except Exception:
        manifest["status"] = "failed"
        manifest["finished_at"] = _utc_now()
        _write_manifest(manifest_path, manifest)
        raise
    manifest["status"] = "complete"
    manifest["finished_at"] = _utc_now()
    _write_manifest(manifest_path, manifest)
    print(f"evolve: {len(seeds)} trial(s) complete under {out_dir}")
    return EXIT_OK


def cmd_compare(args) -> int:
    dirs_a = [Path(d) for d in args.a]
    dirs_b = [Path(d) for d in args.b]
    if len(dirs_a) < 2 or len(dirs_b) < 2:
        raise ConfigError("compare needs at least two trial directories per side")
    check_compatible_configs(dirs_a + dirs_b)
    summaries_a = [summarize_trial(d) for d in dirs_a]
    summaries_b = [summarize_trial(d) for d in dirs_b]
    report = build_comparison(summaries_a, summaries_b)
    paths = write_comparison_report(report, args.out)
    _plot_deltas(report, Path(paths["json"]).with_suffix(".png"))
    label_a, label_b = report["labels"]
    print(f"{'metric':<12} {label_a:>16} {label_b:>16} {'delta%':>9} {'t':>9} {'p':>12}")
    for row in report["metrics"]:
        print(f"{row['metric']:<12} {row[label_a]:>16.6f} {row[label_b]:>16.6f} "
              f"{row['delta_pct']:>9.3f} {row['t']:>9.3f} {row['p']:>12.3e}")
    print(DESK_SCALE_NOTE)
    print(f"report: {paths['json']}")
    return EXIT_OK


def cmd_render(args) -> int:
    rep, grid = load_repertoire(args.checkpoint)
    member = next((m for m in rep.members if m.genome_id == args.id), None)
    if member is None:
        raise LookupFailure(f"individual {args.id!r} not found in {args.checkpoint}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rollout = simulate(member.genome, grid, args.steps)
    write_lenf(out_dir / f"{args.id}.lenf", rollout.frames)
    write_frame_pngs(out_dir, rollout.frames, stem=args.id)
    print(f"render: {args.steps + 1} frames x {grid.channels} channel(s) -> {out_dir}")
    return EXIT_OK


def _plot_trajectory(generations_csv, out_png) -> None:
    import csv as _csv

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = []
    with open(generations_csv, newline="") as f:
        for row in _csv.DictReader(f):
            rows.append(row)
    gens = [int(r["generation"]) for r in rows]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    for key in ("mean_f1", "mean_f2", "mean_f3"):
        ax1.plot(gens, [float(r[key]) for r in rows], label=key)
    ax1.legend()
    ax1.set_ylabel("mean objective")
    ax2.plot(gens, [int(r["archive_size"]) for r in rows], label="archive_size")
    ax2.plot(gens, [int(r["inserted"]) for r in rows], label="inserted")
    ax2.legend()
    ax2.set_xlabel("generation")
    fig.tight_layout()
    fig.savefig(out_png, dpi=110)
    plt.close(fig)


def _plot_deltas(report: dict, out_png) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    metrics = [row["metric"] for row in report["metrics"]]
    deltas = [row["delta_pct"] for row in report["metrics"]]
    fig, ax = plt.subplots(figsize=(6, 4))
    colors = ["tab:green" if d >= 0 else "tab:red" for d in deltas]
    ax.bar(metrics, deltas, color=colors)
    ax.axhline(0.0, color="black", linewidth=0.8)
    label_a, label_b = report["labels"]
    ax.set_ylabel(f"delta % ({label_b} vs {label_a})")
    fig.tight_layout()
    fig.savefig(out_png, dpi=110)
    plt.close(fig)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lenia-moqd",
        description="Evolve Lenia patterns with intrinsic multi-objective fitness.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_evolve = sub.add_parser("evolve", help="run seeded evolution trials")
    p_evolve.add_argument("--config", required=True, help="JSON experiment config")
    p_evolve.add_argument("--out", required=True, help="output directory")
    p_evolve.add_argument("--seeds", default="0,1,2,3,4",
                          help="comma-separated trial seeds (default 0,1,2,3,4)")
    p_evolve.add_argument("--mode", choices=("homeostasis", "multi_objective"),
                          default=None, help="override the config's fitness mode")
    p_evolve.set_defaults(func=cmd_evolve)

    p_compare = sub.add_parser("compare", help="Table-style two-mode comparison report")
    p_compare.add_argument("--a", nargs="+", required=True,
                           help="trial directories for side A")
    p_compare.add_argument("--b", nargs="+", required=True,
                           help="trial directories for side B")
    p_compare.add_argument("--out", required=True,
                           help="report path prefix (writes .json/.csv/.trials.csv)")
    p_compare.set_defaults(func=cmd_compare)

    p_render = sub.add_parser("render", help="export one archived phenotype")
    p_render.add_argument("--checkpoint", required=True, help="repertoire .jsonl file")
    p_render.add_argument("--id", required=True, help="genome id to render")
    p_render.add_argument("--steps", type=int, required=True, help="rollout steps")
    p_render.add_argument("--out", required=True, help="output directory")
    p_render.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except LookupFailure as e:
        print(f"error: {e.args[0]}", file=sys.stderr)
        return EXIT_LOOKUP
    except Exception:
        traceback.print_exc()
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

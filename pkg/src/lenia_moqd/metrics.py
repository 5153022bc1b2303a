"""Post-hoc measurement suite and the two-mode comparison report.

Mass is the per-cell-normalized zeroth spatial moment of final frames.
Repertoire variance is the mean per-dimension population variance
(denominator N) of final-frame encodings. Complexity is the gzip size of
the 8-bit quantized frame stack in KiB -- a Kolmogorov-complexity proxy,
comparable only in relative terms. Mode comparisons use pooled two-sample
t-tests with the p-value from the regularized incomplete beta function.
"""

from __future__ import annotations

import csv
import gzip
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Sequence

import numpy as np
from scipy.special import betainc

from .config import ConfigError, load_config
from .core import mass, simulate
from .frames import quantize_frame
from .repertoire import load_repertoire
from .vae import encode_batch, load_encoder, pool_frame

GZIP_LEVEL = 6

DESK_SCALE_NOTE = (
    "Desk-scale comparison: absolute metric magnitudes are not comparable to "
    "full-scale results (unspecified units, far fewer trials and generations); "
    "only the direction of each delta is meaningful here."
)


@dataclass
class TrialSummary:
    mode: str
    seed: int
    mean_mass: float
    repertoire_variance: float
    mean_complexity: float


@dataclass
class TTestResult:
    t: float
    p: float
    df: int
    degenerate: bool = False


def repertoire_mass(final_frames: Sequence[np.ndarray]) -> float:
    """Mean per-cell-normalized mass over members' final frames."""
    frames = list(final_frames)
    if not frames:
        raise ValueError("repertoire_mass needs at least one frame")
    return float(np.mean([mass(f) for f in frames]))


def repertoire_variance(final_frames: Sequence[np.ndarray], encoder_params,
                        downsample: int) -> float:
    """Mean per-dimension population variance of final-frame encodings."""
    frames = list(final_frames)
    if not frames:
        raise ValueError("repertoire_variance needs at least one frame")
    x = np.stack([pool_frame(f, downsample) for f in frames])
    z = encode_batch(x, encoder_params)
    return float(z.var(axis=0).mean())  # denominator N; single member -> 0


def complexity(frames: np.ndarray) -> float:
    """gzip size (KiB) of all frames quantized to 8 bits, channel-major."""
    frames = np.asarray(frames)
    if frames.ndim != 4 or frames.shape[0] < 1:
        raise ValueError("complexity expects a nonempty (T+1, C, H, W) stack")
    payload = quantize_frame(frames).tobytes()
    return len(gzip.compress(payload, compresslevel=GZIP_LEVEL, mtime=0)) / 1024.0


def pooled_t_test(sample_a: Sequence[float], sample_b: Sequence[float]) -> TTestResult:
    """Pooled-variance two-sample t statistic with a two-sided p-value."""
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("pooled_t_test needs at least two observations per sample")
    na, nb = len(a), len(b)
    df = na + nb - 2
    pooled_var = ((na - 1) * a.var(ddof=1) + (nb - 1) * b.var(ddof=1)) / df
    diff = float(a.mean() - b.mean())
    if pooled_var == 0.0:
        if diff == 0.0:
            return TTestResult(t=0.0, p=1.0, df=df, degenerate=False)
        return TTestResult(t=math.copysign(math.inf, diff), p=0.0, df=df, degenerate=True)
    t = diff / math.sqrt(pooled_var * (1.0 / na + 1.0 / nb))
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return TTestResult(t=float(t), p=min(max(p, 0.0), 1.0), df=df)


def summarize_trial(trial_dir) -> TrialSummary:
    """Re-simulate a trial's final repertoire and measure it.

    Rollouts are exact re-creations of the archived phenotypes (simulation
    is deterministic), encoded with the trial's final encoder checkpoint.
    """
    trial_dir = Path(trial_dir)
    cfg = load_config(trial_dir / "config.json")
    rep, grid = load_repertoire(trial_dir / "repertoire.jsonl")
    params, _, _ = load_encoder(trial_dir / "encoder.bin", trial_dir / "encoder.json")
    if not rep.members:
        raise ValueError(f"{trial_dir}: empty repertoire")
    finals, complexities = [], []
    for member in rep.members:
        roll = simulate(member.genome, grid, cfg.rollout_steps)
        finals.append(roll.frames[-1])
        complexities.append(complexity(roll.frames))
    return TrialSummary(
        mode=cfg.fitness_mode,
        seed=cfg.seed,
        mean_mass=repertoire_mass(finals),
        repertoire_variance=repertoire_variance(finals, params, cfg.downsample),
        mean_complexity=float(np.mean(complexities)),
    )


_VOLATILE_KEYS = {"seed", "fitness_mode"}


def check_compatible_configs(trial_dirs: Sequence) -> None:
    """Refuse comparisons across structurally different experiments."""
    resolved = {}
    for d in trial_dirs:
        cfg = load_config(Path(d) / "config.json")
        data = cfg.to_dict()
        for k in _VOLATILE_KEYS:
            data.pop(k, None)
        resolved[str(d)] = data
    dirs = list(resolved)
    baseline = resolved[dirs[0]]
    diffs = {}
    for d in dirs[1:]:
        for key, value in resolved[d].items():
            if baseline.get(key) != value:
                diffs.setdefault(key, {dirs[0]: baseline.get(key)})[d] = value
    if diffs:
        lines = [f"  {key}: " + "; ".join(f"{d}={v!r}" for d, v in vals.items())
                 for key, vals in sorted(diffs.items())]
        raise ConfigError("trial configs differ on keys:\n" + "\n".join(lines))


METRIC_KEYS = (("mass", "mean_mass"), ("variance", "repertoire_variance"),
               ("complexity", "mean_complexity"))


def build_comparison(summaries_a: List[TrialSummary],
                     summaries_b: List[TrialSummary]) -> dict:
    """Table-style rows (metric, side A, side B, delta %, t, p) plus raw summaries."""
    if len(summaries_a) < 2 or len(summaries_b) < 2:
        raise ValueError("comparison needs at least two trials per side")
    mode_a = summaries_a[0].mode
    mode_b = summaries_b[0].mode
    label_a, label_b = (mode_a, mode_b) if mode_a != mode_b \
        else (f"{mode_a}_a", f"{mode_b}_b")
    rows = []
    for metric, attr in METRIC_KEYS:
        va = [getattr(s, attr) for s in summaries_a]
        vb = [getattr(s, attr) for s in summaries_b]
        mean_a, mean_b = float(np.mean(va)), float(np.mean(vb))
        test = pooled_t_test(vb, va)  # sign convention: positive t means B > A
        delta = 100.0 * (mean_b - mean_a) / mean_a if mean_a != 0.0 else float("nan")
        rows.append({
            "metric": metric,
            label_a: mean_a,
            label_b: mean_b,
            "delta_pct": delta,
            "t": test.t,
            "p": test.p,
            "df": test.df,
            "degenerate_variance": test.degenerate,
        })
    return {
        "labels": [label_a, label_b],
        "metrics": rows,
        "trials": {
            label_a: [asdict(s) for s in summaries_a],
            label_b: [asdict(s) for s in summaries_b],
        },
        "conventions": {
            "mass": "zeroth spatial moment / (H*W), mean over members' final frames",
            "variance": "population variance (denominator N) per latent dim, mean over dims",
            "complexity": "gzip level 6 of 8-bit quantized frames, KiB per individual",
            "t_test": "pooled variance, two-sided p via regularized incomplete beta",
        },
        "note": DESK_SCALE_NOTE,
    }


def _json_safe(value):
    """Replace non-finite floats with strings so the report stays strict JSON."""
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_json_safe(v) for v in value]
    return value


def write_comparison_report(report: dict, out_path) -> dict:
    """Write <out>.json, <out>.csv (metric table) and <out>.trials.csv."""
    out_path = Path(out_path)
    if out_path.suffix == ".json":
        out_path = out_path.with_suffix("")
    out_path.parent.mkdir(parents=True, exist_ok=True)
    json_path = out_path.with_suffix(".json")
    csv_path = out_path.with_suffix(".csv")
    trials_path = out_path.with_suffix(".trials.csv")

    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(_json_safe(report), f, indent=2)
        f.write("\n")

    label_a, label_b = report["labels"]
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["metric", label_a, label_b, "delta_pct", "t", "p"])
        for row in report["metrics"]:
            writer.writerow([row["metric"], repr(row[label_a]), repr(row[label_b]),
                             repr(row["delta_pct"]), repr(row["t"]), repr(row["p"])])

    with open(trials_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["mode", "seed", "mean_mass", "repertoire_variance",
                         "mean_complexity"])
        for label in report["labels"]:
            for s in report["trials"][label]:
                writer.writerow([s["mode"], s["seed"], repr(s["mean_mass"]),
                                 repr(s["repertoire_variance"]),
                                 repr(s["mean_complexity"])])
    return {"json": json_path, "csv": csv_path, "trials_csv": trials_path}

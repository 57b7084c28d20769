"""Named experiment presets and the multi-seed preset runner.

Presets:

- ``compare_families``: td3 / sac / droq-reg / droq-reg-cutd at matched
  budgets (regularization-only droq keeps the sac critic step count; the
  cutd variant raises the critic steps per loop to 20).
- ``g_sweep``: td3 across update-loop counts G.
- ``utility_table``: td3 at a small and a large G; emits the per-source
  addition-utility table (sources x G values).
- ``rl_baselines``: single-policy td3 / sac / droq training curves.

Desk-scale G values are the reference values divided by 10 to match the
10x shorter episodes; ``paper_scale=True`` restores episode length 1000,
batch 128, buffer 1e6, transition batches of 256, and the full G values.
"""

import os
import traceback
from dataclasses import dataclass

import numpy as np

from . import heatmap
from .config import RunConfig, config_from_pairs
from .errors import ConfigError
from .loop import run_gac, run_single_policy, utility_summary

PRESET_NAMES = ("compare_families", "g_sweep", "utility_table", "rl_baselines")

DEFAULT_SEEDS = (0, 1, 2, 3, 4)

PAPER_SCALE_OVERRIDES = {
    "episode_length": 1000,
    "batch_size": 128,
    "buffer_capacity": 1_000_000,
    "transitions_batch": 256,
}


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    kind: str  # "gac" or "single"
    variants: tuple  # ((label, overrides dict), ...)
    seeds: tuple


def build_preset(name: str, seeds=None, paper_scale: bool = False
                 ) -> ExperimentPreset:
    seeds = tuple(seeds) if seeds else DEFAULT_SEEDS
    scale = 1 if paper_scale else 10
    if name == "compare_families":
        g = 1500 // scale
        variants = (
            ("td3", {"family": "td3", "g": g, "g_critic": 2, "g_actor": 1}),
            ("sac", {"family": "sac", "g": g, "g_critic": 1, "g_actor": 1}),
            ("droq-reg", {"family": "droq", "g": g, "g_critic": 1,
                          "g_actor": 1, "dropout_rate": 0.01,
                          "layer_norm": True}),
            ("droq-reg-cutd", {"family": "droq", "g": g, "g_critic": 20,
                               "g_actor": 1, "dropout_rate": 0.01,
                               "layer_norm": True}),
        )
    elif name == "g_sweep":
        values = (150, 500, 2500, 5000, 25000)
        variants = tuple(
            (f"g{v // scale}", {"family": "td3", "g": v // scale,
                                "g_critic": 2, "g_actor": 1})
            for v in values)
    elif name == "utility_table":
        values = (150, 2500)
        variants = tuple(
            (f"g{v // scale}", {"family": "td3", "g": v // scale,
                                "g_critic": 2, "g_actor": 1})
            for v in values)
    elif name == "rl_baselines":
        variants = (
            ("td3", {"family": "td3", "g_critic": 2, "g_actor": 1}),
            ("sac", {"family": "sac", "g_critic": 1, "g_actor": 1}),
            ("droq", {"family": "droq", "g_critic": 20, "g_actor": 1}),
        )
    else:
        raise ConfigError(f"unknown preset {name!r}; choose from "
                          f"{', '.join(PRESET_NAMES)}")
    kind = "single" if name == "rl_baselines" else "gac"
    if paper_scale and kind == "gac":
        variants = tuple((label, {**PAPER_SCALE_OVERRIDES, **ov})
                         for label, ov in variants)
    return ExperimentPreset(name, kind, variants, seeds)


def _run_config(preset, overrides, seed, base_pairs) -> RunConfig:
    pairs = dict(base_pairs or {})
    pairs.update(overrides)
    pairs["seed"] = seed
    return config_from_pairs(pairs)


def run_preset(preset: ExperimentPreset, out_dir, base_pairs=None,
               progress: bool = False) -> int:
    """Execute every (variant, seed) run; returns the process exit status.

    A failed run is recorded in the summary and does not abort the preset
    (exit status 3 signals partial failure).
    """
    os.makedirs(out_dir, exist_ok=True)
    rows = []  # (label, seed, status, final metric dict)
    failures = 0
    per_label_reports: dict[str, list] = {}
    for label, overrides in preset.variants:
        for seed in preset.seeds:
            run_dir = os.path.join(out_dir, f"{label}_seed{seed}")
            try:
                cfg = _run_config(preset, overrides, seed, base_pairs)
                if preset.kind == "single":
                    os.makedirs(run_dir, exist_ok=True)
                    _, evals = run_single_policy(
                        cfg, os.path.join(run_dir, "single_policy.csv"))
                    final = evals[-1][1] if evals else float("nan")
                    rows.append((label, seed, "ok",
                                 {"final_eval_return": final}))
                else:
                    result = run_gac(cfg, out_dir=run_dir, progress=progress)
                    last = result.reports[-1] if result.reports else None
                    metrics = {
                        "qd_score": last.qd_score if last else 0.0,
                        "coverage": last.coverage if last else 0.0,
                        "max_fitness": last.max_fitness if last else None,
                    }
                    rows.append((label, seed, "ok", metrics))
                    per_label_reports.setdefault(label, []).append(result.reports)
                    if len(cfg.grid_dims) == 2:
                        heatmap.render_svg(
                            result.archive,
                            os.path.join(run_dir, "archive.svg"),
                            header_lines=[f"run={label}_seed{seed}"],
                            title=f"{label} seed {seed}")
                if progress:
                    print(f"[{preset.name}] {label} seed {seed}: done")
            except Exception:
                failures += 1
                rows.append((label, seed, "failed", {}))
                with open(os.path.join(out_dir, "failures.log"), "a") as fh:
                    fh.write(f"{label}_seed{seed}\n{traceback.format_exc()}\n")
        # flush the summary after each variant so partial output survives
        _write_summary(preset, rows, out_dir)
    if preset.name == "utility_table":
        _write_utility_table(preset, per_label_reports, out_dir)
    return 3 if failures else 0


def _metric_key(preset) -> str:
    return "final_eval_return" if preset.kind == "single" else "qd_score"


def _write_summary(preset, rows, out_dir) -> None:
    key = _metric_key(preset)
    extra = () if preset.kind == "single" else ("coverage", "max_fitness")
    with open(os.path.join(out_dir, "summary.csv"), "w") as fh:
        fh.write(f"# preset={preset.name}\n")
        fh.write(f"# seeds={','.join(str(s) for s in preset.seeds)}\n")
        fh.write("variant,seed,status," + ",".join((key,) + extra) + "\n")
        for label, seed, status, metrics in rows:
            vals = [metrics.get(key)] + [metrics.get(c) for c in extra]
            cells = ["" if v is None else repr(float(v)) for v in vals]
            fh.write(f"{label},{seed},{status},{','.join(cells)}\n")
        fh.write("variant,stat," + key + "\n")
        for label in dict.fromkeys(r[0] for r in rows):
            finals = np.array([m[key] for lab, _, st, m in rows
                               if lab == label and st == "ok"])
            if finals.size == 0:
                continue
            fh.write(f"{label},median,{float(np.median(finals))!r}\n")
            fh.write(f"{label},q25,{float(np.percentile(finals, 25))!r}\n")
            fh.write(f"{label},q75,{float(np.percentile(finals, 75))!r}\n")


def _write_utility_table(preset, per_label_reports, out_dir) -> None:
    """Per-source mean additions per generation, one column per G value."""
    labels = [label for label, _ in preset.variants]
    table = {}
    for label in labels:
        runs = per_label_reports.get(label, [])
        if not runs:
            continue
        means = [utility_summary(reports) for reports in runs]
        table[label] = {src: float(np.mean([m[src] for m in means]))
                        for src in ("actor", "pg", "ga")}
    with open(os.path.join(out_dir, "utility_table.csv"), "w") as fh:
        fh.write(f"# preset={preset.name}\n")
        fh.write("source," + ",".join(labels) + "\n")
        for src in ("actor", "pg", "ga"):
            cells = [repr(table[lab][src]) if lab in table else ""
                     for lab in labels]
            fh.write(f"{src}_addition,{','.join(cells)}\n")

"""Paired raw-vs-debLoRA probe comparison on the synthetic benchmark, over several seeds.

The adapter is fit on the training split only; both arms share that split.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .features import compute_class_stats
from .pipeline import EvalReport, PipelineConfig, evaluate_arm, fit_deblora, stratified_split
from .probe import DistanceReport, feature_distances
from .synth import SynthSpec, benchmark_spec, generate_synthetic


@dataclass
class SeedResult:
    seed: int
    raw: EvalReport
    debiased: EvalReport
    before_calibration: DistanceReport
    after_calibration: DistanceReport
    min_cluster_slack: int  # min(sizes) - min_size; negative would be a feasibility violation
    final_loss: float
    seconds: float


def run_seed(seed: int, cfg: PipelineConfig | None = None, spec: SynthSpec | None = None) -> SeedResult:
    t0 = time.perf_counter()
    cfg = replace(cfg or PipelineConfig(), seed=seed)
    spec = replace(spec, seed=seed) if spec is not None else benchmark_spec(seed)
    fset = generate_synthetic(spec)
    split = stratified_split(fset.labels, seed)
    train = fset.subset(split[0])
    fit = fit_deblora(train, cfg)
    return SeedResult(
        seed=seed,
        raw=evaluate_arm(fset, None, split, cfg.probe, cfg.thresholds),
        debiased=evaluate_arm(fset, fit.adapter, split, cfg.probe, cfg.thresholds),
        before_calibration=feature_distances(train, fit.stats),
        after_calibration=feature_distances(train, fit.stats, fit.plan.targets),
        min_cluster_slack=int(fit.clusters.sizes.min()) - fit.clusters.min_size,
        final_loss=fit.loss_history[-1],
        seconds=time.perf_counter() - t0,
    )


def run_benchmark(seeds=range(5), cfg: PipelineConfig | None = None, spec: SynthSpec | None = None) -> list[SeedResult]:
    return [run_seed(s, cfg, spec) for s in seeds]


def summarize(results: list[SeedResult]) -> dict:
    """mean and std (population) of group F1 per arm, in percentage points."""
    out = {}
    for arm in ("raw", "debiased"):
        for group in ("head", "middle", "tail", "overall"):
            vals = [getattr(getattr(r, arm).groups, group) for r in results]
            vals = np.asarray([np.nan if v is None else 100 * v for v in vals])
            out[(arm, group)] = (float(np.mean(vals)), float(np.std(vals)))
    return out


def format_summary(results: list[SeedResult]) -> str:
    s = summarize(results)
    lines = [f"{'arm':<10}" + "".join(f"{g:>16}" for g in ("Head", "Middle", "Tail", "Overall"))]
    for arm in ("raw", "debiased"):
        cells = "".join(f"{s[(arm, g)][0]:>9.1f} ± {s[(arm, g)][1]:<4.1f}" for g in ("head", "middle", "tail", "overall"))
        lines.append(f"{arm:<10}{cells}")
    return "\n".join(lines)

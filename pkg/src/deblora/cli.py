"""Command-line entry point: one subcommand per pipeline stage.

Exit codes: 0 success, 1 validation, 2 IO, 3 numeric divergence.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import kmeans
from .adapter import LowRankAdapter
from .debias import build_plan, load_plan_meta
from .errors import DebLoraError, IoError
from .features import compute_class_stats, load_features, save_features
from .pipeline import (
    PipelineConfig,
    cluster_features,
    read_json,
    run_deblora,
    run_eval,
    train_from_plan,
    write_json,
)
from .probe import feature_distances
from .synth import benchmark_spec, generate_synthetic, load_synth_spec

log = logging.getLogger("deblora")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON config (SynthSpec for synth, PipelineConfig otherwise)")
    p.add_argument("--seed", type=int, help="64-bit unsigned seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", choices=("csv", "binary"), help="feature file format (default: by extension)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="deblora", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic long-tailed feature set")
    p.add_argument("--benchmark", action="store_true", help="use the built-in 6-class benchmark spec")

    p = sub.add_parser("stats", parents=[common], help="class counts, imbalance ratios and head/middle/tail groups")
    p.add_argument("input")

    p = sub.add_parser("cluster", parents=[common], help="constrained k-means")
    p.add_argument("input")
    p.add_argument("--k", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--normalize", action="store_true", default=None, help="L2-normalize rows before clustering")

    p = sub.add_parser("debias", parents=[common], help="de-biased centers and calibrated targets")
    p.add_argument("input")
    p.add_argument("--clusters", required=True)
    p.add_argument("--tail-only", action="store_true", default=None, help="fit the adapter on tail rows only")

    p = sub.add_parser("train", parents=[common], help="fit the residual low-rank adapter")
    p.add_argument("input")
    p.add_argument("--targets", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--rank", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)

    p = sub.add_parser("probe", parents=[common], help="linear-probe macro F1 per frequency group")
    p.add_argument("input")
    p.add_argument("--adapter")
    p.add_argument("--compare", action="store_true", help="also report the raw-feature baseline on the same split")

    p = sub.add_parser("analyze", parents=[common], help="cosine inter/intra-class distance analysis")
    p.add_argument("input")
    p.add_argument("--adapter")
    p.add_argument("--targets", help="analyze a targets file (e.g. calibrated features) instead")

    p = sub.add_parser("pipeline", parents=[common], help="stats -> cluster -> debias -> train, end to end")
    p.add_argument("input", nargs="?")
    p.add_argument("--k", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--rank", type=int)
    p.add_argument("--tail-only", action="store_true", default=None)
    return parser


def _pipeline_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    overrides = {}
    for name in ("k", "rho", "rank", "normalize", "tail_only", "seed", "format"):
        val = getattr(args, name, None)
        if val is not None:
            overrides[name] = val
    if getattr(args, "input", None):
        overrides["input"] = args.input
    if args.out:
        overrides["out_dir"] = args.out
    adapter_over = {k: v for k, v in (("learning_rate", getattr(args, "lr", None)), ("epochs", getattr(args, "epochs", None))) if v is not None}
    if adapter_over:
        overrides["adapter"] = replace(cfg.adapter, **adapter_over)
    return replace(cfg, **overrides)


def _out_dir(cfg: PipelineConfig) -> Path:
    out = Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out}: {exc}") from exc
    return out


def _ext(fmt) -> str:
    return "csv" if fmt == "csv" else "bin"


def _format_table(rows) -> str:
    header = f"{'arm':<12}{'Head':>8}{'Middle':>8}{'Tail':>8}{'Overall':>9}"
    lines = [header, "-" * len(header)]

    def cell(v, w):
        return f"{'-':>{w}}" if v is None else f"{100 * v:>{w}.1f}"

    for name, g in rows:
        lines.append(f"{name:<12}{cell(g.head, 8)}{cell(g.middle, 8)}{cell(g.tail, 8)}{cell(g.overall, 9)}")
    return "\n".join(lines)


def cmd_synth(args) -> int:
    if args.config and not args.benchmark:
        spec = load_synth_spec(args.config)
    else:
        spec = benchmark_spec()
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    fset = generate_synthetic(spec)
    out = _out_dir(PipelineConfig(out_dir=args.out or "out"))
    path = out / f"features.{_ext(args.format)}"
    save_features(fset, path, args.format or "binary")
    write_json(out / "synth_spec.json", spec.to_dict())
    print(f"wrote {fset.n} x {fset.d} features, {fset.num_classes} classes -> {path}")
    return 0


def cmd_stats(args) -> int:
    cfg = _pipeline_config(args)
    fset = load_features(args.input, cfg.format)
    stats = compute_class_stats(fset, cfg.thresholds)
    print(f"{'class':<16}{'count':>8}{'freq':>9}{'gamma':>9}  group")
    for c, name in enumerate(fset.class_names):
        print(f"{name:<16}{stats.counts[c]:>8}{stats.frequencies[c]:>9.4f}{stats.gamma[c]:>9.2f}  {stats.group[c].value}")
    print(f"dataset imbalance ratio: {stats.dataset_gamma:.2f}")
    if args.out:
        write_json(_out_dir(cfg) / "stats.json", stats.to_dict(fset.class_names))
    return 0


def cmd_cluster(args) -> int:
    cfg = _pipeline_config(args)
    fset = load_features(args.input, cfg.format)
    model = cluster_features(fset, cfg)
    path = _out_dir(cfg) / "clusters.json"
    model.save(path)
    print(f"K={model.k} rho={model.rho} min_size={model.min_size} inertia={model.inertia:.6g} "
          f"sizes {int(model.sizes.min())}..{int(model.sizes.max())} -> {path}")
    return 0


def cmd_debias(args) -> int:
    cfg = _pipeline_config(args)
    fset = load_features(args.input, cfg.format)
    stats = compute_class_stats(fset, cfg.thresholds)
    clusters = kmeans.ClusterModel.load(args.clusters)
    plan = build_plan(fset, stats, clusters, cfg.tail_only)
    out = _out_dir(cfg)
    plan.save(out / "plan.json")
    targets = out / f"targets.{_ext(cfg.format)}"
    save_features(fset.with_features(plan.targets), targets, cfg.format or "binary")
    for c, a in zip(plan.tail_classes, plan.alphas):
        print(f"tail class {fset.class_names[c]}: gamma={stats.gamma[c]:.2f} alpha={a:.4f}")
    if not plan.tail_classes:
        print("no tail classes; targets equal the input features")
    print(f"-> {out / 'plan.json'}, {targets}")
    return 0


def cmd_train(args) -> int:
    cfg = _pipeline_config(args)
    fset = load_features(args.input, cfg.format)
    targets = load_features(args.targets, cfg.format)
    plan = load_plan_meta(args.plan)
    adapter, history = train_from_plan(fset, targets.features, plan["tail_classes"], bool(plan.get("tail_only")), cfg)
    path = _out_dir(cfg) / "adapter.json"
    adapter.save(path)
    print(f"rank {adapter.rank}: loss {history[0]:.6g} -> {history[-1]:.6g} -> {path}")
    return 0


def cmd_probe(args) -> int:
    cfg = _pipeline_config(args)
    seed = cfg.seed
    rows, payload = [], {}
    if args.adapter is None or args.compare:
        base = run_eval(args.input, None, cfg.probe, cfg.thresholds, seed, fmt=cfg.format)
        rows.append(("baseline", base.groups))
        payload["baseline"] = base.to_dict()
    if args.adapter:
        rep = run_eval(args.input, args.adapter, cfg.probe, cfg.thresholds, seed, fmt=cfg.format)
        rows.append(("adapted", rep.groups))
        payload["adapted"] = rep.to_dict()
    print(_format_table(rows))
    if args.out:
        write_json(_out_dir(cfg) / "probe_report.json", payload)
    return 0


def cmd_analyze(args) -> int:
    cfg = _pipeline_config(args)
    fset = load_features(args.input, cfg.format)
    stats = compute_class_stats(fset, cfg.thresholds)
    feats = None
    if args.targets:
        feats = load_features(args.targets, cfg.format).features
    elif args.adapter:
        feats = LowRankAdapter.load(args.adapter).forward(fset.features)
    rep = feature_distances(fset, stats, feats)
    for k, v in rep.to_dict().items():
        print(f"{k:<16}{'-' if v is None else f'{v:.4f}':>10}")
    if args.out:
        write_json(_out_dir(cfg) / "distances.json", rep.to_dict())
    return 0


def cmd_pipeline(args) -> int:
    cfg = _pipeline_config(args)
    manifest = run_deblora(cfg)
    print(f"K={cfg.k} rho={cfg.rho} rank={cfg.rank} seed={cfg.seed} final loss {manifest.final_loss:.6g}")
    for k, v in manifest.artifacts.items():
        print(f"  {k:<9} {v}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "stats": cmd_stats,
    "cluster": cmd_cluster,
    "debias": cmd_debias,
    "train": cmd_train,
    "probe": cmd_probe,
    "analyze": cmd_analyze,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except DebLoraError as exc:
        where = f" in stage {exc.stage}" if exc.stage else ""
        print(f"error{where}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""End-to-end de-biasing run (cluster -> calibrate -> fit adapter) and the paired probe evaluation."""
from __future__ import annotations

import hashlib
import json
import logging
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, kmeans
from .adapter import LowRankAdapter, TrainConfig, adapter_init, adapter_train
from .debias import DebiasPlan, build_plan
from .errors import DebLoraError, IoError, ValidationError
from .features import ClassStats, FeatureSet, SplitThresholds, compute_class_stats, load_features, save_features
from .probe import DistanceReport, GroupReport, ProbeConfig, feature_distances, group_report, macro_f1, train_linear_probe

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    input: str | None = None
    format: str | None = None
    k: int = 32
    rho: float = 4.0
    rank: int = 8
    normalize: bool = False
    n_init: int = 10
    max_iter: int = 100
    tol: float = 1e-6
    thresholds: SplitThresholds = field(default_factory=SplitThresholds)
    adapter: TrainConfig = field(default_factory=TrainConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    seed: int = 0
    tail_only: bool = False
    out_dir: str = "out"

    def __post_init__(self):
        if self.k < 1 or self.rank < 1 or self.rho < 1:
            raise ValidationError("k and rank must be >= 1, rho >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        raw = dict(raw)
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ValidationError(f"unknown pipeline config keys: {sorted(unknown)}")
        try:
            if "thresholds" in raw:
                raw["thresholds"] = SplitThresholds(**raw["thresholds"])
            if "adapter" in raw:
                raw["adapter"] = TrainConfig(**raw["adapter"])
            if "probe" in raw:
                raw["probe"] = ProbeConfig(**raw["probe"])
            return cls(**raw)
        except TypeError as exc:
            raise ValidationError(f"malformed pipeline config: {exc}") from exc

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_dict(read_json(path))


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from exc


def write_json(path, obj) -> None:
    try:
        Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


@dataclass
class DebLoraResult:
    stats: ClassStats
    clusters: kmeans.ClusterModel
    plan: DebiasPlan
    adapter: LowRankAdapter
    loss_history: list
    timings: dict = field(default_factory=dict)


@contextmanager
def _stage(name: str, timings: dict):
    t0 = time.perf_counter()
    try:
        yield
    except DebLoraError as exc:
        if exc.stage is None:
            exc.stage = name
        raise
    finally:
        timings[name] = round(time.perf_counter() - t0, 6)


def cluster_features(fset: FeatureSet, cfg: PipelineConfig) -> kmeans.ClusterModel:
    model = kmeans.fit(fset, cfg.k, cfg.rho, cfg.seed, cfg.max_iter, cfg.tol, cfg.normalize, cfg.n_init)
    if cfg.normalize:
        # the partition comes from unit-norm features; centers must live in the raw space being calibrated
        model = kmeans.recenter(model, fset)
    return model


def train_from_plan(fset: FeatureSet, targets, plan_tail_classes, tail_only: bool, cfg: PipelineConfig):
    targets = np.asarray(targets, dtype=np.float32)  # adapter always trains on what the targets file stores
    rows = np.arange(fset.n)
    if tail_only:
        rows = np.flatnonzero(np.isin(fset.labels, list(plan_tail_classes)))
    init = adapter_init(fset.d, cfg.rank, cfg.seed)
    if rows.size == 0:
        log.warning("tail-only training with no tail classes: adapter left at identity")
        return init, [0.0]
    return adapter_train(init, fset.features[rows], targets[rows], cfg.adapter)


def fit_deblora(fset: FeatureSet, cfg: PipelineConfig) -> DebLoraResult:
    timings: dict = {}
    with _stage("stats", timings):
        stats = compute_class_stats(fset, cfg.thresholds)
    with _stage("cluster", timings):
        clusters = cluster_features(fset, cfg)
    with _stage("debias", timings):
        plan = build_plan(fset, stats, clusters, cfg.tail_only)
    with _stage("train", timings):
        adapter, history = train_from_plan(fset, plan.targets, plan.tail_classes, cfg.tail_only, cfg)
    return DebLoraResult(stats, clusters, plan, adapter, history, timings)


@dataclass
class RunManifest:
    config: dict
    seed: int
    version: str
    timings: dict
    artifacts: dict
    final_loss: float

    def to_dict(self) -> dict:
        return asdict(self)


def _ext(fmt: str | None) -> str:
    return "csv" if fmt == "csv" else "bin"


def run_deblora(cfg: PipelineConfig) -> RunManifest:
    if not cfg.input:
        raise ValidationError("pipeline config has no input path")
    out = Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out}: {exc}") from exc
    fmt = cfg.format
    paths = {
        "clusters": out / "clusters.json",
        "plan": out / "plan.json",
        "targets": out / f"targets.{_ext(fmt)}",
        "adapter": out / "adapter.json",
    }
    written: list[Path] = []
    timings: dict = {}
    try:
        with _stage("load", timings):
            fset = load_features(cfg.input, fmt)
        result = fit_deblora(fset, cfg)
        timings.update(result.timings)
        with _stage("write", timings):
            for key, writer in (
                ("clusters", lambda p: result.clusters.save(p)),
                ("plan", lambda p: result.plan.save(p)),
                ("targets", lambda p: save_features(fset.with_features(result.plan.targets), p, fmt or "binary")),
                ("adapter", lambda p: result.adapter.save(p)),
            ):
                written.append(paths[key])
                writer(paths[key])
            manifest = RunManifest(
                config=cfg.to_dict(),
                seed=cfg.seed,
                version=__version__,
                timings=timings,
                artifacts={k: str(p) for k, p in paths.items()},
                final_loss=result.loss_history[-1],
            )
            written.append(out / "manifest.json")
            write_json(out / "manifest.json", manifest.to_dict())
    except BaseException:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    return manifest


def stratified_split(labels, seed: int, test_fraction: float = 0.2) -> tuple[np.ndarray, np.ndarray]:
    """Per-class split; every class with >= 2 samples keeps >= 1 sample on each side.

    Singleton classes go to train only.
    """
    if not 0 < test_fraction < 1:
        raise ValidationError(f"test_fraction must be in (0, 1), got {test_fraction}")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    test = []
    for c in range(int(labels.max()) + 1):
        idx = np.flatnonzero(labels == c)
        if idx.size < 2:
            if idx.size == 1:
                log.warning("class %d has a single sample; kept for training only", c)
            continue
        idx = rng.permutation(idx)
        n_test = min(idx.size - 1, max(1, int(round(test_fraction * idx.size))))
        test.append(idx[:n_test])
    test = np.sort(np.concatenate(test)) if test else np.zeros(0, dtype=np.int64)
    mask = np.zeros(labels.size, dtype=bool)
    mask[test] = True
    return np.flatnonzero(~mask), np.flatnonzero(mask)


def split_hash(train_idx, test_idx) -> str:
    h = hashlib.sha256()
    h.update(np.asarray(train_idx, dtype="<i8").tobytes())
    h.update(b"|")
    h.update(np.asarray(test_idx, dtype="<i8").tobytes())
    return h.hexdigest()[:16]


@dataclass
class EvalReport:
    groups: GroupReport
    distances: DistanceReport
    split_hash: str
    adapter: str | None = None

    def to_dict(self) -> dict:
        return {
            "adapter": self.adapter,
            "split_hash": self.split_hash,
            "f1": self.groups.to_dict(),
            "distances": self.distances.to_dict(),
        }


def evaluate_arm(
    fset: FeatureSet,
    adapter: LowRankAdapter | None,
    split: tuple[np.ndarray, np.ndarray],
    probe_cfg: ProbeConfig | None = None,
    thresholds: SplitThresholds | None = None,
) -> EvalReport:
    stats = compute_class_stats(fset, thresholds)
    feats = fset if adapter is None else fset.with_features(adapter.forward(fset.features))
    train_idx, test_idx = split
    probe = train_linear_probe(feats.subset(train_idx), probe_cfg)
    f1, _ = macro_f1(probe.predict(feats.features[test_idx]), fset.labels[test_idx], fset.num_classes)
    evaluated = np.unique(fset.labels[test_idx])
    return EvalReport(
        groups=group_report(f1, stats, evaluated),
        distances=feature_distances(feats, stats),
        split_hash=split_hash(train_idx, test_idx),
    )


def run_eval(
    features,
    adapter=None,
    probe_cfg: ProbeConfig | None = None,
    thresholds: SplitThresholds | None = None,
    split_seed: int = 0,
    test_fraction: float = 0.2,
    fmt: str | None = None,
) -> EvalReport:
    fset = features if isinstance(features, FeatureSet) else load_features(features, fmt)
    name = None
    if adapter is not None and not isinstance(adapter, LowRankAdapter):
        name = str(adapter)
        adapter = LowRankAdapter.load(adapter)
    if adapter is not None and adapter.d != fset.d:
        raise ValidationError(f"adapter dimension {adapter.d} does not match features ({fset.d})")
    split = stratified_split(fset.labels, split_seed, test_fraction)
    report = evaluate_arm(fset, adapter, split, probe_cfg, thresholds)
    report.adapter = name
    return report

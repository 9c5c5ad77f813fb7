"""Synthetic long-tailed feature sets built from shared attribute prototypes.

Every class is a fixed convex mixture of ``num_attributes`` prototype vectors,
so head and tail classes share visual "attributes" by construction.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import IoError, ValidationError
from .features import FeatureSet

PROTOTYPE_NORM = 10.0


@dataclass(frozen=True)
class ClassSpec:
    sample_count: int
    attribute_weights: tuple[float, ...]
    name: str | None = None


@dataclass(frozen=True)
class SynthSpec:
    d: int
    num_attributes: int
    class_specs: tuple[ClassSpec, ...]
    noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.d < 1 or self.num_attributes < 1:
            raise ValidationError("d and num_attributes must be >= 1")
        if not self.class_specs:
            raise ValidationError("at least one class is required")
        if self.noise_sigma < 0:
            raise ValidationError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not 0 <= self.seed < 2**64:
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        for c, cs in enumerate(self.class_specs):
            w = np.asarray(cs.attribute_weights, dtype=np.float64)
            if cs.sample_count < 1:
                raise ValidationError(f"class {c}: sample_count must be >= 1")
            if w.shape != (self.num_attributes,):
                raise ValidationError(f"class {c}: expected {self.num_attributes} attribute weights, got {w.size}")
            if (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
                raise ValidationError(f"class {c}: attribute weights must be nonnegative and sum to 1")

    @property
    def counts(self) -> list[int]:
        return [cs.sample_count for cs in self.class_specs]

    def to_dict(self) -> dict:
        out = asdict(self)
        out["class_specs"] = [
            {k: (list(v) if k == "attribute_weights" else v) for k, v in cs.items() if v is not None}
            for cs in out["class_specs"]
        ]
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "SynthSpec":
        try:
            specs = tuple(
                ClassSpec(int(cs["sample_count"]), tuple(float(w) for w in cs["attribute_weights"]), cs.get("name"))
                for cs in raw["class_specs"]
            )
            return cls(
                d=int(raw["d"]),
                num_attributes=int(raw["num_attributes"]),
                class_specs=specs,
                noise_sigma=float(raw.get("noise_sigma", 1.0)),
                seed=int(raw.get("seed", 0)),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed synth spec: {exc!r}") from exc


def load_synth_spec(path) -> SynthSpec:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from exc
    return SynthSpec.from_dict(raw)


# Head classes are pure attributes. The two smallest classes put 0.7 of their
# weight on head attributes 0 and 1, which leaves raw tail F1 well below 1.
BENCHMARK_COUNTS = (1000, 800, 600, 200, 50, 20)
BENCHMARK_WEIGHTS = (
    (1.0, 0.0, 0.0, 0.0, 0.0),
    (0.0, 1.0, 0.0, 0.0, 0.0),
    (0.0, 0.0, 1.0, 0.0, 0.0),
    (0.0, 0.0, 0.0, 1.0, 0.0),
    (0.7, 0.0, 0.0, 0.0, 0.3),
    (0.0, 0.7, 0.0, 0.0, 0.3),
)


def benchmark_spec(seed: int = 0) -> SynthSpec:
    """The default 6-class benchmark: d=16, 5 attributes, imbalance ratio 50."""
    return SynthSpec(
        d=16,
        num_attributes=5,
        class_specs=tuple(
            ClassSpec(n, w, f"class{c}") for c, (n, w) in enumerate(zip(BENCHMARK_COUNTS, BENCHMARK_WEIGHTS))
        ),
        noise_sigma=1.0,
        seed=seed,
    )


def make_prototypes(rng: np.random.Generator, num_attributes: int, d: int) -> np.ndarray:
    protos = rng.standard_normal((num_attributes, d))
    return protos / np.linalg.norm(protos, axis=1, keepdims=True) * PROTOTYPE_NORM


def generate_synthetic(spec: SynthSpec) -> FeatureSet:
    rng = np.random.default_rng(spec.seed)
    protos = make_prototypes(rng, spec.num_attributes, spec.d)
    weights = np.asarray([cs.attribute_weights for cs in spec.class_specs], dtype=np.float64)
    labels = np.repeat(np.arange(len(spec.class_specs)), spec.counts)
    means = weights @ protos
    noise = rng.standard_normal((labels.size, spec.d))
    feats = means[labels] + spec.noise_sigma * noise
    names = tuple(cs.name or f"class{c}" for c, cs in enumerate(spec.class_specs))
    return FeatureSet(feats, labels, names)

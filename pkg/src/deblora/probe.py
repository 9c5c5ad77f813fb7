"""Linear probing on frozen features, macro F1 by frequency group, and cosine-distance analysis."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import DegenerateVectorError, ValidationError
from .features import ClassStats, FeatureSet, Group


def pool_features(fmap) -> np.ndarray:
    """ReLU then global average pooling of an H x W x d map."""
    fmap = np.asarray(fmap, dtype=np.float64)
    if fmap.ndim != 3 or fmap.shape[0] * fmap.shape[1] == 0 or fmap.shape[2] == 0:
        raise ValidationError(f"expected a non-empty H x W x d map, got shape {fmap.shape}")
    if not np.isfinite(fmap).all():
        raise ValidationError("feature map contains non-finite values")
    return np.maximum(fmap, 0.0).mean(axis=(0, 1))


@dataclass(frozen=True)
class ProbeConfig:
    learning_rate: float = 0.1
    epochs: int = 1000

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")


@dataclass(frozen=True, eq=False)
class LinearProbe:
    W: np.ndarray  # C x d
    b: np.ndarray  # C

    def logits(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.W.T + self.b

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.logits(x), axis=-1)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy_and_grads(W, b, x, labels) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean softmax cross-entropy and its exact gradients w.r.t. W and b."""
    n = x.shape[0]
    logp = _log_softmax(x @ W.T + b)
    rows = np.arange(n)
    loss = -float(logp[rows, labels].sum()) / n
    delta = np.exp(logp)
    delta[rows, labels] -= 1.0
    delta /= n
    return loss, delta.T @ x, delta.sum(axis=0)


def train_linear_probe(train: FeatureSet, cfg: ProbeConfig | None = None) -> LinearProbe:
    cfg = cfg or ProbeConfig()
    counts = np.bincount(train.labels, minlength=train.num_classes)
    if (counts == 0).any():
        raise ValidationError(f"class {train.class_names[int(np.flatnonzero(counts == 0)[0])]!r} absent from training data")
    x = train.features.astype(np.float64)
    W = np.zeros((train.num_classes, train.d))
    b = np.zeros(train.num_classes)
    for _ in range(cfg.epochs):
        _, gW, gb = cross_entropy_and_grads(W, b, x, train.labels)
        W -= cfg.learning_rate * gW
        b -= cfg.learning_rate * gb
    return LinearProbe(W, b)


def macro_f1(predictions, labels, num_classes: int) -> tuple[np.ndarray, float]:
    """Per-class F1 (0/0 counts as 0) and their unweighted mean."""
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise ValidationError(f"{predictions.size} predictions vs {labels.size} labels")
    tp = np.bincount(labels[predictions == labels], minlength=num_classes).astype(np.float64)
    pred_count = np.bincount(predictions, minlength=num_classes)
    true_count = np.bincount(labels, minlength=num_classes)
    # F1 = 2TP / (2TP + FP + FN) = 2TP / (predicted + actual), identical to 2PR/(P+R)
    denom = (pred_count + true_count).astype(np.float64)
    f1 = np.divide(2.0 * tp, denom, out=np.zeros(num_classes), where=denom > 0)
    return f1, float(f1.mean())


@dataclass(frozen=True)
class GroupReport:
    per_class_f1: tuple[float, ...]
    overall: float
    head: float | None
    middle: float | None
    tail: float | None
    support: dict
    evaluated: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "per_class_f1": list(self.per_class_f1),
            "overall": self.overall,
            "head": self.head,
            "middle": self.middle,
            "tail": self.tail,
            "support": dict(self.support),
            "evaluated_classes": list(self.evaluated),
        }


def group_report(per_class_f1, stats: ClassStats, evaluated=None) -> GroupReport:
    """Unweighted group means; classes outside ``evaluated`` are left out of every mean."""
    f1 = np.asarray(per_class_f1, dtype=np.float64)
    if f1.shape != (stats.num_classes,):
        raise ValidationError(f"{f1.size} F1 scores for {stats.num_classes} classes")
    evaluated = tuple(range(stats.num_classes)) if evaluated is None else tuple(int(c) for c in evaluated)
    if not evaluated:
        raise ValidationError("no classes to report on")
    means, support = {}, {}
    for g in Group:
        members = [c for c in evaluated if stats.group[c] is g]
        support[g.value] = len(members)
        means[g] = float(np.mean(f1[members])) if members else None
    return GroupReport(
        per_class_f1=tuple(float(v) for v in f1),
        overall=float(np.mean(f1[list(evaluated)])),
        head=means[Group.HEAD],
        middle=means[Group.MIDDLE],
        tail=means[Group.TAIL],
        support=support,
        evaluated=evaluated,
    )


@dataclass(frozen=True)
class DistanceReport:
    inter_head_tail: float | None
    inter_tail_tail: float | None
    intra_tail: float | None

    def to_dict(self) -> dict:
        return {
            "inter_head_tail": self.inter_head_tail,
            "inter_tail_tail": self.inter_tail_tail,
            "intra_tail": self.intra_tail,
        }


def cosine_distance(u, v) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise DegenerateVectorError("cosine distance of a zero-norm vector")
    return float(np.clip(1.0 - np.dot(u, v) / (nu * nv), 0.0, 2.0))


def class_centers(features, labels, num_classes: int) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    sums = np.zeros((num_classes, features.shape[1]))
    np.add.at(sums, labels, features)
    counts = np.bincount(labels, minlength=num_classes)
    return sums / np.maximum(counts, 1)[:, None]


def feature_distances(fset: FeatureSet, stats: ClassStats, features=None) -> DistanceReport:
    """Cosine-distance analysis; ``features`` overrides fset.features (e.g. calibrated targets).

    A field is None when its group precondition fails (no head/tail class, or < 2 tail classes).
    """
    x = np.asarray(fset.features if features is None else features, dtype=np.float64)
    centers = class_centers(x, fset.labels, fset.num_classes)
    head, tail = stats.members(Group.HEAD), stats.members(Group.TAIL)

    head_tail = None
    if head and tail:
        head_tail = float(np.mean([cosine_distance(centers[h], centers[t]) for h in head for t in tail]))
    tail_tail = None
    if len(tail) >= 2:
        tail_tail = float(np.mean([cosine_distance(centers[a], centers[b]) for a, b in combinations(tail, 2)]))
    intra = None
    if tail:
        rows = np.flatnonzero(np.isin(fset.labels, tail))
        intra = float(np.mean([cosine_distance(x[i], centers[fset.labels[i]]) for i in rows]))
    return DistanceReport(head_tail, tail_tail, intra)

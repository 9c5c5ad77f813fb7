"""De-biased tail-class centers, the alpha schedule, and calibrated regression targets."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IoError, ValidationError
from .features import ClassStats, FeatureSet, Group
from .kmeans import ClusterModel


def cluster_weights(clusters: ClusterModel, fset: FeatureSet, c: int) -> np.ndarray:
    """Fraction of class c's samples falling in each of the K clusters."""
    if clusters.assignment.shape[0] != fset.n:
        raise ValidationError(f"cluster assignment covers {clusters.assignment.shape[0]} rows, feature set has {fset.n}")
    members = clusters.assignment[fset.labels == c]
    if members.size == 0:
        raise ValidationError(f"class {c} has no samples")
    return np.bincount(members, minlength=clusters.k) / members.size


def debiased_center(clusters: ClusterModel, fset: FeatureSet, c: int) -> np.ndarray:
    return cluster_weights(clusters, fset, c) @ clusters.centers


def alpha_for(gamma: float) -> float:
    if not gamma >= 1:
        raise ValidationError(f"imbalance ratio must be >= 1, got {gamma}")
    return min(1.0, 10.0 / gamma)


def calibrate(z, mu_hat, alpha: float) -> np.ndarray:
    """Pull z toward mu_hat: alpha * z + (1 - alpha) * mu_hat. Works row-wise on matrices."""
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"alpha must lie in [0, 1], got {alpha}")
    z = np.asarray(z, dtype=np.float64)
    mu_hat = np.asarray(mu_hat, dtype=np.float64)
    if z.shape[-1] != mu_hat.shape[-1]:
        raise ValidationError(f"dimension mismatch: {z.shape} vs {mu_hat.shape}")
    return alpha * z + (1.0 - alpha) * mu_hat


@dataclass(frozen=True, eq=False)
class DebiasPlan:
    tail_classes: tuple[int, ...]
    debiased_centers: np.ndarray  # one row per tail class
    alphas: tuple[float, ...]
    weights: np.ndarray  # per tail class, length-K cluster weights
    targets: np.ndarray  # N x d
    tail_only: bool = False

    def center_of(self, c: int) -> np.ndarray:
        return self.debiased_centers[self.tail_classes.index(c)]

    def alpha_of(self, c: int) -> float:
        return self.alphas[self.tail_classes.index(c)]

    def training_rows(self, labels) -> np.ndarray:
        """Rows used to fit the adapter: everything, or only tail rows in tail-only mode."""
        labels = np.asarray(labels)
        if not self.tail_only:
            return np.arange(labels.size)
        return np.flatnonzero(np.isin(labels, self.tail_classes))

    def to_dict(self) -> dict:
        return {
            "tail_classes": list(self.tail_classes),
            "alphas": list(self.alphas),
            "debiased_centers": self.debiased_centers.tolist(),
            "weights": self.weights.tolist(),
            "tail_only": self.tail_only,
        }

    def save(self, path) -> None:
        try:
            Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc


def load_plan_meta(path) -> dict:
    """Plan JSON without targets (those live in a feature file)."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from exc
    if "tail_classes" not in raw or "alphas" not in raw:
        raise ValidationError(f"{path}: not a debias plan")
    return raw


def build_plan(fset: FeatureSet, stats: ClassStats, clusters: ClusterModel, tail_only: bool = False) -> DebiasPlan:
    if stats.num_classes != fset.num_classes:
        raise ValidationError("class stats and feature set disagree on the number of classes")
    targets = fset.features.astype(np.float64)
    tail = tuple(stats.members(Group.TAIL))
    centers, alphas, weights = [], [], []
    for c in tail:
        w = cluster_weights(clusters, fset, c)
        mu_hat = w @ clusters.centers
        alpha = alpha_for(float(stats.gamma[c]))
        rows = fset.labels == c
        targets[rows] = calibrate(targets[rows], mu_hat, alpha)
        centers.append(mu_hat)
        alphas.append(alpha)
        weights.append(w)
    d = fset.d
    return DebiasPlan(
        tail_classes=tail,
        debiased_centers=np.asarray(centers, dtype=np.float64).reshape(len(tail), d),
        alphas=tuple(alphas),
        weights=np.asarray(weights, dtype=np.float64).reshape(len(tail), clusters.k),
        targets=targets,
        tail_only=tail_only,
    )

"""K-means with a minimum cluster size: every cluster keeps >= floor(N / (K*rho)) points.

Assignment is nearest-center followed by a greedy minimum-regret repair that
moves points from clusters with surplus into deficient ones. The repair can
break Lloyd's monotone descent, so :func:`fit` keeps the best feasible state.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InfeasibleConstraintError, InternalError, IoError, ValidationError
from .features import FeatureSet


@dataclass(frozen=True, eq=False)
class ClusterModel:
    centers: np.ndarray
    assignment: np.ndarray
    sizes: np.ndarray
    k: int
    rho: float
    min_size: int
    inertia: float

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "rho": self.rho,
            "min_size": self.min_size,
            "centers": self.centers.tolist(),
            "assignment": self.assignment.tolist(),
            "sizes": self.sizes.tolist(),
            "inertia": self.inertia,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ClusterModel":
        try:
            k, rho = int(raw["k"]), float(raw["rho"])
            assignment = np.asarray(raw["assignment"], dtype=np.int64)
            return cls(
                centers=np.asarray(raw["centers"], dtype=np.float64).reshape(k, -1),
                assignment=assignment,
                sizes=np.asarray(raw["sizes"], dtype=np.int64),
                k=k,
                rho=rho,
                min_size=int(raw.get("min_size", min_cluster_size(assignment.size, k, rho))),
                inertia=float(raw["inertia"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed cluster model: {exc!r}") from exc

    def save(self, path) -> None:
        try:
            Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc

    @classmethod
    def load(cls, path) -> "ClusterModel":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}") from exc


def min_cluster_size(n: int, k: int, rho: float) -> int:
    return max(1, math.floor(n / (k * rho)))


def _as_matrix(data) -> np.ndarray:
    x = data.features if isinstance(data, FeatureSet) else data
    return np.asarray(x, dtype=np.float64)


def sq_distances(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # explicit differences rather than the |x|^2 - 2xc + |c|^2 expansion: exact zeros, no cancellation
    diff = x[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def inertia_of(x: np.ndarray, centers: np.ndarray, assignment: np.ndarray) -> float:
    diff = x - centers[assignment]
    return float(np.einsum("nd,nd->", diff, diff))


def kmeanspp_init(data, k: int, seed: int = 0) -> np.ndarray:
    x = _as_matrix(data)
    if k < 1:
        raise ValidationError(f"K must be >= 1, got {k}")
    distinct = np.unique(x, axis=0).shape[0]
    if k > distinct:
        raise ValidationError(f"K={k} exceeds the {distinct} distinct feature rows")
    rng = np.random.default_rng(seed)
    idx = [int(rng.integers(x.shape[0]))]
    d2 = sq_distances(x, x[idx]).ravel()
    for _ in range(1, k):
        # already-chosen rows (and their duplicates) have zero mass, so picks stay distinct
        nxt = int(rng.choice(x.shape[0], p=d2 / d2.sum()))
        idx.append(nxt)
        d2 = np.minimum(d2, sq_distances(x, x[nxt:nxt + 1]).ravel())
    return x[idx].copy()


def assign_constrained(data, centers, min_size: int) -> tuple[np.ndarray, np.ndarray]:
    x = _as_matrix(data)
    centers = np.asarray(centers, dtype=np.float64)
    k = centers.shape[0]
    if not np.isfinite(centers).all():
        raise ValidationError("centers must be finite")
    if min_size * k > x.shape[0]:
        raise InfeasibleConstraintError(f"min_size {min_size} x K {k} exceeds N={x.shape[0]}")
    dist = sq_distances(x, centers)
    assignment = np.argmin(dist, axis=1)
    sizes = np.bincount(assignment, minlength=k)
    rows = np.arange(x.shape[0])
    while True:
        deficient = np.flatnonzero(sizes < min_size)
        if deficient.size == 0:
            break
        target = deficient[0]
        donor_ok = sizes[assignment] > min_size
        if not donor_ok.any():
            raise InternalError("no surplus cluster to repair from")
        regret = dist[:, target] - dist[rows, assignment]
        regret[~donor_ok] = np.inf
        i = int(np.argmin(regret))  # ties -> lowest sample index
        sizes[assignment[i]] -= 1
        sizes[target] += 1
        assignment[i] = target
    return assignment, sizes


def update_centers(data, assignment, k: int) -> np.ndarray:
    x = _as_matrix(data)
    assignment = np.asarray(assignment)
    counts = np.bincount(assignment, minlength=k)
    if (counts == 0).any():
        raise InternalError(f"cluster {int(np.flatnonzero(counts == 0)[0])} is empty")
    sums = np.zeros((k, x.shape[1]))
    np.add.at(sums, assignment, x)
    return sums / counts[:, None]


def fit(
    data,
    k: int = 32,
    rho: float = 4.0,
    seed: int = 0,
    max_iter: int = 100,
    tol: float = 1e-6,
    normalize: bool = False,
    n_init: int = 10,
) -> ClusterModel:
    """Best of ``n_init`` k-means++ restarts, each seeded deterministically from ``seed``."""
    if n_init < 1:
        raise ValidationError(f"n_init must be >= 1, got {n_init}")
    if k < 1:
        raise ValidationError(f"K must be >= 1, got {k}")
    if rho < 1:
        raise ValidationError(f"rho must be >= 1, got {rho}")
    x = _as_matrix(data)
    if normalize:
        norms = np.linalg.norm(x, axis=1, keepdims=True)
        if (norms == 0).any():
            raise ValidationError("cannot L2-normalize a zero feature row")
        x = x / norms
    min_size = min_cluster_size(x.shape[0], k, rho)
    best = None
    for run_seed in np.random.SeedSequence(seed).generate_state(n_init, dtype=np.uint64):
        run = _lloyd(x, k, min_size, int(run_seed), max_iter, tol)
        if best is None or run[3] < best[3]:
            best = run
    centers, assignment, sizes, inertia = best
    return ClusterModel(centers, assignment, sizes, k, float(rho), min_size, inertia)


def _lloyd(x, k, min_size, seed, max_iter, tol):
    centers = kmeanspp_init(x, k, seed)
    best = None
    prev = math.inf
    for _ in range(max_iter):
        assignment, sizes = assign_constrained(x, centers, min_size)
        centers = update_centers(x, assignment, k)
        inertia = inertia_of(x, centers, assignment)
        if best is None or inertia < best[3]:
            best = (centers, assignment, sizes, inertia)
        if prev - inertia < tol:
            break
        prev = inertia
    return best


def recenter(model: ClusterModel, data) -> ClusterModel:
    """Same partition, centers and inertia recomputed from ``data`` (e.g. raw features after a normalized fit)."""
    x = _as_matrix(data)
    centers = update_centers(x, model.assignment, model.k)
    return ClusterModel(centers, model.assignment, model.sizes, model.k, model.rho, model.min_size,
                        inertia_of(x, centers, model.assignment))

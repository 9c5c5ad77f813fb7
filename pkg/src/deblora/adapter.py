"""Residual low-rank adapters g(z) = z + B A z, class-wise ensembles, and MSE training."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DivergenceError, IoError, ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LowRankAdapter:
    B: np.ndarray  # d x r
    A: np.ndarray  # r x d

    def __post_init__(self):
        B = np.array(self.B, dtype=np.float64)
        A = np.array(self.A, dtype=np.float64)
        if B.ndim != 2 or A.ndim != 2 or B.shape[1] != A.shape[0] or B.shape[0] != A.shape[1]:
            raise ValidationError(f"incompatible factor shapes B{B.shape}, A{A.shape}")
        if not 1 <= A.shape[0] <= A.shape[1]:
            raise ValidationError(f"rank must satisfy 1 <= r <= d, got r={A.shape[0]}, d={A.shape[1]}")
        B.flags.writeable = False
        A.flags.writeable = False
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "A", A)

    @property
    def d(self) -> int:
        return self.A.shape[1]

    @property
    def rank(self) -> int:
        return self.A.shape[0]

    def residual(self, z: np.ndarray) -> np.ndarray:
        if z.ndim == 1:
            return self.B @ (self.A @ z)
        return (z @ self.A.T) @ self.B.T

    def forward(self, z) -> np.ndarray:
        z = _check_input(z, self.d)
        return z + self.residual(z)

    __call__ = forward

    def delta(self) -> np.ndarray:
        """The dense d x d update B A."""
        return self.B @ self.A

    def to_dict(self) -> dict:
        return {"d": self.d, "rank": self.rank, "B": self.B.tolist(), "A": self.A.tolist()}

    @classmethod
    def from_dict(cls, raw: dict) -> "LowRankAdapter":
        try:
            ad = cls(np.asarray(raw["B"], dtype=np.float64), np.asarray(raw["A"], dtype=np.float64))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed adapter checkpoint: {exc!r}") from exc
        if ad.d != int(raw.get("d", ad.d)) or ad.rank != int(raw.get("rank", ad.rank)):
            raise ValidationError("adapter checkpoint d/rank disagree with factor shapes")
        return ad

    def save(self, path) -> None:
        try:
            Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc

    @classmethod
    def load(cls, path) -> "LowRankAdapter":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(raw)


def _check_input(z, d: int) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim not in (1, 2) or z.shape[-1] != d:
        raise ValidationError(f"expected input with last dimension {d}, got shape {z.shape}")
    if not np.isfinite(z).all():
        raise ValidationError("input contains non-finite values")
    return z


def adapter_init(d: int, r: int, seed: int = 0) -> LowRankAdapter:
    if not 1 <= r <= d:
        raise ValidationError(f"rank must satisfy 1 <= r <= d, got r={r}, d={d}")
    rng = np.random.default_rng(seed)
    A = rng.normal(0.0, np.sqrt(1.0 / d), size=(r, d))
    return LowRankAdapter(np.zeros((d, r)), A)


def adapter_forward(adapter: LowRankAdapter, z) -> np.ndarray:
    return adapter.forward(z)


@dataclass(frozen=True, eq=False)
class CombinedAdapter:
    """z + sum_i w_i B_i A_i z, kept factored."""

    adapters: tuple[LowRankAdapter, ...]
    weights: tuple[float, ...]

    @property
    def d(self) -> int:
        return self.adapters[0].d

    def forward(self, z) -> np.ndarray:
        z = _check_input(z, self.d)
        acc = np.zeros_like(z)
        for w, ad in zip(self.weights, self.adapters):
            acc = acc + w * ad.residual(z)
        return z + acc

    __call__ = forward


def adapters_combine(adapters, weights) -> CombinedAdapter:
    adapters, weights = tuple(adapters), tuple(float(w) for w in weights)
    if not adapters or len(adapters) != len(weights):
        raise ValidationError(f"got {len(adapters)} adapters and {len(weights)} weights")
    if len({ad.d for ad in adapters}) != 1:
        raise ValidationError("adapters must share the feature dimension")
    return CombinedAdapter(adapters, weights)


@dataclass(frozen=True, eq=False)
class ClassAdapterEnsemble:
    adapters: tuple[LowRankAdapter, ...]

    def __post_init__(self):
        object.__setattr__(self, "adapters", tuple(self.adapters))
        if not self.adapters:
            raise ValidationError("ensemble needs at least one adapter")
        if len({(ad.d, ad.rank) for ad in self.adapters}) != 1:
            raise ValidationError("all class adapters must share d and rank")

    @property
    def d(self) -> int:
        return self.adapters[0].d

    @property
    def num_classes(self) -> int:
        return len(self.adapters)


def clora_forward(ensemble: ClassAdapterEnsemble, z) -> np.ndarray:
    """Concatenate every class adapter's output, in class-index order, along the last axis."""
    z = _check_input(z, ensemble.d)
    return np.concatenate([ad.forward(z) for ad in ensemble.adapters], axis=-1)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-2
    epochs: int = 500
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")


def mse_loss_and_grads(B, A, inputs, targets) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean over rows of ||z + B A z - t||^2, with exact gradients w.r.t. B and A."""
    n = inputs.shape[0]
    with np.errstate(over="ignore", invalid="ignore"):
        hidden = inputs @ A.T  # n x r
        resid = inputs + hidden @ B.T - targets
        loss = float(np.einsum("nd,nd->", resid, resid)) / n
        grad_B = (2.0 / n) * resid.T @ hidden
        grad_A = (2.0 / n) * (resid @ B).T @ inputs
    return loss, grad_B, grad_A


def adapter_train(
    adapter: LowRankAdapter, inputs, targets, cfg: TrainConfig | None = None
) -> tuple[LowRankAdapter, list[float]]:
    """Full-batch gradient descent with a fixed step; returns the final iterate and per-epoch loss.

    history[0] is the loss before the first update, history[-1] the loss of the returned adapter.
    """
    cfg = cfg or TrainConfig()
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if inputs.shape != targets.shape or inputs.ndim != 2 or inputs.shape[1] != adapter.d:
        raise ValidationError(f"inputs {inputs.shape} and targets {targets.shape} must both be N x {adapter.d}")
    if inputs.shape[0] == 0:
        raise ValidationError("cannot train on zero rows")
    if not (np.isfinite(inputs).all() and np.isfinite(targets).all()):
        raise ValidationError("inputs and targets must be finite")

    B, A = adapter.B.copy(), adapter.A.copy()
    history = []
    for _ in range(cfg.epochs):
        loss, gB, gA = mse_loss_and_grads(B, A, inputs, targets)
        if not np.isfinite(loss):
            raise DivergenceError(f"loss became non-finite at epoch {len(history)}; lower learning_rate")
        history.append(loss)
        B -= cfg.learning_rate * gB
        A -= cfg.learning_rate * gA
    loss, _, _ = mse_loss_and_grads(B, A, inputs, targets)
    if not np.isfinite(loss):
        raise DivergenceError("loss became non-finite after the last update; lower learning_rate")
    history.append(loss)
    log.debug("adapter_train: loss %.6g -> %.6g over %d epochs", history[0], history[-1], cfg.epochs)
    return LowRankAdapter(B, A), history

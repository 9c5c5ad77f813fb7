"""Labeled feature sets: CSV / FSET1 binary I/O and long-tail statistics."""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import FormatError, IoError, ValidationError

MAGIC = b"FSET1"


@dataclass(frozen=True, eq=False)
class FeatureSet:
    features: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self):
        feats = np.array(self.features, dtype=np.float32, order="C")
        labels = np.array(self.labels, dtype=np.int64)
        names = tuple(str(n) for n in self.class_names)
        if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] < 1:
            raise ValidationError(f"features must be a non-empty N x d matrix, got shape {feats.shape}")
        if labels.shape != (feats.shape[0],):
            raise ValidationError(f"expected {feats.shape[0]} labels, got shape {labels.shape}")
        if len(set(names)) != len(names):
            raise ValidationError("class names must be unique")
        bad = np.flatnonzero((labels < 0) | (labels >= len(names)))
        if bad.size:
            raise ValidationError(f"row {bad[0]}: label {labels[bad[0]]} outside [0, {len(names)})")
        bad = np.flatnonzero(~np.isfinite(feats).all(axis=1))
        if bad.size:
            raise ValidationError(f"row {bad[0]}: non-finite feature value")
        feats.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def with_features(self, features) -> "FeatureSet":
        return FeatureSet(features, self.labels, self.class_names)

    def subset(self, rows) -> "FeatureSet":
        return FeatureSet(self.features[rows], self.labels[rows], self.class_names)

    def equals(self, other: "FeatureSet") -> bool:
        return (
            self.class_names == other.class_names
            and np.array_equal(self.labels, other.labels)
            and self.features.shape == other.features.shape
            and self.features.tobytes() == other.features.tobytes()
        )


def default_class_names(num_classes: int) -> tuple[str, ...]:
    return tuple(str(i) for i in range(num_classes))


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt:
        if fmt not in ("csv", "binary"):
            raise ValidationError(f"unknown format {fmt!r}")
        return fmt
    return "csv" if path.suffix.lower() == ".csv" else "binary"


def load_features(path, fmt: str | None = None) -> FeatureSet:
    path = Path(path)
    fmt = _infer_format(path, fmt)
    try:
        if fmt == "csv":
            return _load_csv(path)
        return _load_binary(path)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def save_features(fset: FeatureSet, path, fmt: str | None = None) -> None:
    path = Path(path)
    fmt = _infer_format(path, fmt)
    try:
        if fmt == "csv":
            _save_csv(fset, path)
        else:
            path.write_bytes(_encode_binary(fset))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _load_csv(path: Path) -> FeatureSet:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "label" or len(header) < 2:
            raise FormatError(f"{path}: header must be 'label,f0,...,f{{d-1}}'")
        d = len(header) - 1
        for j, col in enumerate(header[1:]):
            if col.strip() != f"f{j}":
                raise FormatError(f"{path}: header column {j + 1} is {col!r}, expected 'f{j}'")
        raw_labels, rows = [], []
        for i, row in enumerate(reader):
            if not row:
                continue
            if len(row) != d + 1:
                raise FormatError(f"{path}: row {i} has {len(row)} fields, expected {d + 1}")
            try:
                vals = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise ValidationError(f"row {i}: {exc}") from exc
            if not all(np.isfinite(vals)):
                raise ValidationError(f"row {i}: non-finite feature value")
            raw_labels.append(row[0].strip())
            rows.append(vals)
    if not rows:
        raise ValidationError(f"{path}: no samples")

    try:
        int_labels = [int(v) for v in raw_labels]
    except ValueError:
        int_labels = None
    if int_labels is not None:
        if min(int_labels) < 0:
            i = int(np.argmin(int_labels))
            raise ValidationError(f"row {i}: negative label {int_labels[i]}")
        labels = np.asarray(int_labels, dtype=np.int64)
        names = default_class_names(int(labels.max()) + 1)
    else:
        index: dict[str, int] = {}
        for lab in raw_labels:
            index.setdefault(lab, len(index))
        labels = np.asarray([index[lab] for lab in raw_labels], dtype=np.int64)
        names = tuple(index)
    return FeatureSet(np.asarray(rows, dtype=np.float32), labels, names)


def _save_csv(fset: FeatureSet, path: Path) -> None:
    # integer labels when names are the implicit 0..C-1, names otherwise
    use_names = fset.class_names != default_class_names(fset.num_classes)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"f{j}" for j in range(fset.d)])
        for lab, row in zip(fset.labels, fset.features):
            tag = fset.class_names[lab] if use_names else str(int(lab))
            # %.9g round-trips float32 exactly
            writer.writerow([tag] + [f"{v:.9g}" for v in row.tolist()])


def _encode_binary(fset: FeatureSet) -> bytes:
    parts = [MAGIC, struct.pack("<III", fset.n, fset.d, fset.num_classes)]
    for name in fset.class_names:
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValidationError(f"class name too long: {name[:20]}...")
        parts.append(struct.pack("<H", len(raw)) + raw)
    parts.append(fset.labels.astype("<u4").tobytes())
    parts.append(fset.features.astype("<f4").tobytes())
    return b"".join(parts)


def _load_binary(path: Path) -> FeatureSet:
    buf = path.read_bytes()
    if buf[:5] != MAGIC:
        raise FormatError(f"{path}: bad magic {buf[:5]!r}, expected {MAGIC!r}")
    try:
        n, d, c = struct.unpack_from("<III", buf, 5)
        pos = 17
        names = []
        for _ in range(c):
            (ln,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            names.append(buf[pos:pos + ln].decode("utf-8"))
            pos += ln
    except (struct.error, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: truncated or corrupt header: {exc}") from exc
    expected = pos + 4 * n + 4 * n * d
    if len(buf) != expected:
        raise FormatError(f"{path}: payload is {len(buf)} bytes, header implies {expected}")
    labels = np.frombuffer(buf, dtype="<u4", count=n, offset=pos).astype(np.int64)
    feats = np.frombuffer(buf, dtype="<f4", count=n * d, offset=pos + 4 * n).reshape(n, d)
    return FeatureSet(feats.astype(np.float32), labels, tuple(names))


class Group(str, Enum):
    HEAD = "head"
    MIDDLE = "middle"
    TAIL = "tail"


@dataclass(frozen=True)
class SplitThresholds:
    tail_max_freq: float = 0.01
    head_min_freq: float = 0.05

    def __post_init__(self):
        if not 0 < self.tail_max_freq < self.head_min_freq < 1:
            raise ValidationError(
                f"need 0 < tail_max_freq < head_min_freq < 1, got {self.tail_max_freq}, {self.head_min_freq}"
            )


@dataclass(frozen=True, eq=False)
class ClassStats:
    counts: np.ndarray
    frequencies: np.ndarray
    group: tuple[Group, ...]
    gamma: np.ndarray

    @property
    def dataset_gamma(self) -> float:
        return float(self.gamma.max())

    @property
    def num_classes(self) -> int:
        return len(self.counts)

    def members(self, group: Group) -> list[int]:
        return [c for c, g in enumerate(self.group) if g is group]

    def to_dict(self, class_names=None) -> dict:
        names = class_names or default_class_names(self.num_classes)
        return {
            "dataset_gamma": self.dataset_gamma,
            "classes": [
                {
                    "name": names[c],
                    "count": int(self.counts[c]),
                    "frequency": float(self.frequencies[c]),
                    "group": self.group[c].value,
                    "gamma": float(self.gamma[c]),
                }
                for c in range(self.num_classes)
            ],
        }


def compute_class_stats(fset: FeatureSet, thresholds: SplitThresholds | None = None) -> ClassStats:
    thresholds = thresholds or SplitThresholds()
    counts = np.bincount(fset.labels, minlength=fset.num_classes)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise ValidationError(f"class {fset.class_names[empty[0]]!r} has no samples")
    freqs = counts / fset.n
    groups = []
    for f in freqs:
        if f < thresholds.tail_max_freq:
            groups.append(Group.TAIL)
        elif f > thresholds.head_min_freq:
            groups.append(Group.HEAD)
        else:
            groups.append(Group.MIDDLE)
    gamma = counts.max() / counts
    return ClassStats(counts, freqs, tuple(groups), gamma)

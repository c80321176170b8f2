# src/data.py
"""
data.py
Labeled feature matrices and the scenario partitioners that split them among clients.

Scenarios:
- homogeneous: stratified equal split (every class divided as evenly as possible)
- by_plan: explicit per-client per-class counts (non-i.i.d. and client-inference layouts)

On disk a dataset is either
- CSV: d feature columns then one integer label column, optional single header line
- binary: the params tensor format with layers `features` (n x d), `labels` (n), `num_classes` (1)
"""

from __future__ import annotations
import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import CodecError, ConfigError, DatasetError, InfeasiblePlanError
from .params import ParameterSet, load_params, save_params

log = logging.getLogger(__name__)

# Spacing of synthetic cluster centres relative to unit spread
SYNTH_SEPARATION = 4.0

# Fixed client layouts over the 4-class source (rows: clients 1..c, columns: classes 0..3)
PLAN_PRESETS: Dict[str, Tuple[Tuple[int, ...], ...]] = {
    "noniid-4-clients": (
        (280, 16, 881, 615),
        (107, 13, 368, 280),
        (257, 17, 1054, 720),
        (80, 3, 263, 166),
    ),
    "client-inference-3-clients": (
        (120, 9, 1122, 496),
        (180, 11, 894, 506),
        (524, 29, 550, 779),
    ),
}


# -------------------------
# Data
# -------------------------
@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64, copy=True)
        y = np.array(self.labels, copy=True)
        if x.ndim != 2:
            raise DatasetError(f"features must be a 2-D matrix, got shape {x.shape}")
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise DatasetError(f"{y.shape} labels for {x.shape[0]} feature rows")
        if y.size and not np.all(np.equal(np.mod(y, 1), 0)):
            raise DatasetError("labels must be integers")
        y = y.astype(np.int64)
        k = int(self.num_classes)
        if k < 1:
            raise DatasetError(f"num_classes must be positive, got {k}")
        if y.size and (y.min() < 0 or y.max() >= k):
            raise DatasetError(f"labels must lie in [0, {k})")
        if not np.all(np.isfinite(x)):
            raise DatasetError("features hold non-finite values")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "num_classes", k)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def class_counts(self) -> Tuple[int, ...]:
        return tuple(int(c) for c in np.bincount(self.labels, minlength=self.num_classes))

    def subset(self, indices: Sequence[int]) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.features[idx], self.labels[idx], self.num_classes)

    def empty_like(self) -> "LabeledDataset":
        return LabeledDataset(np.zeros((0, self.dim)), np.zeros(0, dtype=np.int64), self.num_classes)

    def equals(self, other: "LabeledDataset") -> bool:
        return (
            self.num_classes == other.num_classes
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )


@dataclass(frozen=True)
class PartitionPlan:
    """counts[i][k]: samples of class k handed to client i+1."""

    counts: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(int(v) for v in row) for row in self.counts)
        if not rows:
            raise ConfigError("partition plan has no clients")
        widths = {len(r) for r in rows}
        if len(widths) != 1:
            raise ConfigError(f"partition plan rows have different lengths: {sorted(widths)}")
        if any(v < 0 for r in rows for v in r):
            raise ConfigError("partition plan counts must be non-negative")
        object.__setattr__(self, "counts", rows)

    @classmethod
    def preset(cls, name: str) -> "PartitionPlan":
        if name not in PLAN_PRESETS:
            raise ConfigError(f"unknown plan preset '{name}' (known: {', '.join(sorted(PLAN_PRESETS))})")
        return cls(PLAN_PRESETS[name])

    @property
    def num_clients(self) -> int:
        return len(self.counts)

    @property
    def num_classes(self) -> int:
        return len(self.counts[0])

    def client_sizes(self) -> Tuple[int, ...]:
        return tuple(sum(r) for r in self.counts)


def _half_down(x: float) -> int:
    """Nearest integer, ties toward zero (x >= 0)."""
    return int(math.ceil(round(x, 9) - 0.5))


def _class_indices(dataset: LabeledDataset) -> List[np.ndarray]:
    return [np.flatnonzero(dataset.labels == k) for k in range(dataset.num_classes)]


# -------------------------
# Partitioners
# -------------------------
def partition_homogeneous(dataset: LabeledDataset, num_clients: int, seed: int) -> List[LabeledDataset]:
    """
    Stratified equal split. Classes are visited from the highest label down;
    the remainder of each class goes one sample per client starting at a cursor
    that carries over to the next class, so client totals differ by at most one.
    """
    if num_clients < 1:
        raise ConfigError(f"num_clients must be >= 1, got {num_clients}")
    if num_clients == 1:
        return [dataset]

    rng = np.random.default_rng(seed)
    per_client: List[List[np.ndarray]] = [[] for _ in range(num_clients)]
    by_class = _class_indices(dataset)
    cursor = 0
    for k in range(dataset.num_classes - 1, -1, -1):
        idx = rng.permutation(by_class[k])
        base, rem = divmod(idx.size, num_clients)
        sizes = [base] * num_clients
        for j in range(rem):
            sizes[(cursor + j) % num_clients] += 1
        cursor = (cursor + rem) % num_clients
        start = 0
        for i, size in enumerate(sizes):
            per_client[i].append(idx[start : start + size])
            start += size

    return [dataset.subset(np.sort(np.concatenate(parts))) for parts in per_client]


def partition_by_plan(dataset: LabeledDataset, plan: PartitionPlan, seed: int) -> List[LabeledDataset]:
    if plan.num_classes != dataset.num_classes:
        raise ConfigError(
            f"plan has {plan.num_classes} class columns, dataset has {dataset.num_classes} classes"
        )
    available = dataset.class_counts()
    used = [0] * plan.num_classes
    for i, row in enumerate(plan.counts):
        for k, want in enumerate(row):
            used[k] += want
            if used[k] > available[k]:
                raise InfeasiblePlanError(i + 1, k, used[k], available[k])

    rng = np.random.default_rng(seed)
    shuffled = [rng.permutation(idx) for idx in _class_indices(dataset)]
    offsets = [0] * plan.num_classes
    clients = []
    for row in plan.counts:
        parts = []
        for k, want in enumerate(row):
            parts.append(shuffled[k][offsets[k] : offsets[k] + want])
            offsets[k] += want
        taken = np.sort(np.concatenate(parts)) if parts else np.zeros(0, dtype=np.int64)
        clients.append(dataset.subset(taken))
    log.debug("partitioned %d rows into client sizes %s", len(dataset), plan.client_sizes())
    return clients


# -------------------------
# Splits / samples
# -------------------------
def stratified_split(
    dataset: LabeledDataset, test_fraction: float, seed: int
) -> Tuple[LabeledDataset, LabeledDataset]:
    """
    Per-class test counts are round(count * fraction) with ties downward; the
    class sum is then reconciled to round(n * fraction) on the largest class.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    counts = dataset.class_counts()
    take = [_half_down(c * test_fraction) for c in counts]
    diff = _half_down(len(dataset) * test_fraction) - sum(take)
    if diff and counts:
        largest = int(np.argmax(counts))
        take[largest] = int(np.clip(take[largest] + diff, 0, counts[largest]))

    rng = np.random.default_rng(seed)
    train_parts, test_parts = [], []
    for k, idx in enumerate(_class_indices(dataset)):
        idx = rng.permutation(idx)
        test_parts.append(idx[: take[k]])
        train_parts.append(idx[take[k] :])
    train_idx = np.sort(np.concatenate(train_parts)) if train_parts else np.zeros(0, dtype=np.int64)
    test_idx = np.sort(np.concatenate(test_parts)) if test_parts else np.zeros(0, dtype=np.int64)
    return dataset.subset(train_idx), dataset.subset(test_idx)


def shadow_sample(client_train: LabeledDataset, fraction: float, seed: int) -> LabeledDataset:
    """Uniform subset without replacement of size round(n * fraction), in draw order."""
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"shadow fraction must lie in (0, 1], got {fraction}")
    n = len(client_train)
    size = _half_down(n * fraction)
    rng = np.random.default_rng(seed)
    return client_train.subset(rng.choice(n, size=size, replace=False))


# -------------------------
# Synthetic sources
# -------------------------
def synth_by_counts(class_counts: Sequence[int], dim: int, spread: float, seed: int) -> LabeledDataset:
    """Gaussian clusters, one per class, with centres drawn from N(0, SYNTH_SEPARATION^2)."""
    counts = [int(c) for c in class_counts]
    if not counts or any(c < 0 for c in counts) or dim < 1 or spread < 0:
        raise ConfigError(f"invalid synthetic request: counts={counts} dim={dim} spread={spread}")
    rng = np.random.default_rng(seed)
    means = rng.normal(size=(len(counts), dim)) * SYNTH_SEPARATION
    blocks, labels = [], []
    for k, c in enumerate(counts):
        blocks.append(means[k] + spread * rng.normal(size=(c, dim)))
        labels.append(np.full(c, k, dtype=np.int64))
    return LabeledDataset(np.concatenate(blocks), np.concatenate(labels), len(counts))


def synth_blobs(num_classes: int, dim: int, per_class: int, spread: float, seed: int) -> LabeledDataset:
    if num_classes < 1 or per_class < 1:
        raise ConfigError("num_classes and per_class must be positive")
    return synth_by_counts([per_class] * num_classes, dim, spread, seed)


def synth_pair(
    train_counts: Sequence[int], test_counts: Sequence[int], dim: int, spread: float, seed: int
) -> Tuple[LabeledDataset, LabeledDataset]:
    """Train and held-out sources drawn around the same cluster centres."""
    if len(train_counts) != len(test_counts):
        raise ConfigError("train and test class counts must cover the same classes")
    total = [int(a) + int(b) for a, b in zip(train_counts, test_counts)]
    full = synth_by_counts(total, dim, spread, seed)
    train_idx, test_idx = [], []
    for k, idx in enumerate(_class_indices(full)):
        train_idx.append(idx[: int(train_counts[k])])
        test_idx.append(idx[int(train_counts[k]) :])
    return full.subset(np.concatenate(train_idx)), full.subset(np.concatenate(test_idx))


# -------------------------
# CSV
# -------------------------
def load_csv(
    path: Union[str, Path], has_header: bool = False, num_classes: Optional[int] = None
) -> LabeledDataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Dataset not found: {path}")

    rows: List[List[float]] = []
    labels: List[int] = []
    width = None
    with open(path, "r", encoding="utf-8", newline="") as f:
        for line_no, record in enumerate(csv.reader(f), start=1):
            if has_header and line_no == 1:
                continue
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) < 2:
                raise DatasetError("need at least one feature and a label", row=line_no)
            if width is None:
                width = len(record)
            elif len(record) != width:
                raise DatasetError(f"expected {width} columns, found {len(record)}", row=line_no)
            values = []
            for col, cell in enumerate(record[:-1], start=1):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DatasetError(f"cannot parse {cell!r} as a number", row=line_no, column=col) from None
            cell = record[-1].strip()
            try:
                label = int(cell)
            except ValueError:
                raise DatasetError(f"label {cell!r} is not an integer", row=line_no, column=width) from None
            if label < 0:
                raise DatasetError(f"label {label} is negative", row=line_no, column=width)
            rows.append(values)
            labels.append(label)

    if not rows:
        raise DatasetError("empty dataset")
    k = max(labels) + 1 if num_classes is None else int(num_classes)
    return LabeledDataset(np.asarray(rows, dtype=np.float64), np.asarray(labels, dtype=np.int64), k)


def write_csv(path: Union[str, Path], dataset: LabeledDataset, header: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        if header:
            writer.writerow([f"x{j}" for j in range(dataset.dim)] + ["label"])
        for row, label in zip(dataset.features, dataset.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])
    return path


# -------------------------
# Binary
# -------------------------
def dataset_to_params(dataset: LabeledDataset) -> ParameterSet:
    return ParameterSet(
        (
            ("features", dataset.features),
            ("labels", dataset.labels.astype(np.float64)),
            ("num_classes", np.array([float(dataset.num_classes)])),
        )
    )


def dataset_from_params(pset: ParameterSet) -> LabeledDataset:
    if pset.names != ("features", "labels", "num_classes"):
        raise CodecError(f"not a dataset payload: layers {pset.names}")
    features = pset["features"]
    if features.ndim != 2:
        raise CodecError(f"features layer must be 2-D, got shape {features.shape}")
    return LabeledDataset(features, pset["labels"], int(pset["num_classes"][0]))


def save_dataset(path: Union[str, Path], dataset: LabeledDataset) -> Path:
    return save_params(path, dataset_to_params(dataset))


def load_dataset(path: Union[str, Path]) -> LabeledDataset:
    """Binary (.bin) or CSV, by suffix."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Dataset not found: {path}")
    if path.suffix.lower() == ".csv":
        return load_csv(path)
    return dataset_from_params(load_params(path))

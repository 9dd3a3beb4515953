"""Datasets and the IID / label-skewed partitioners.

Skewed partitioning with ``skew = s`` over ``n`` nodes:

1. For each class, shuffle its samples and take the first ``floor(s * count)``
   into the skewed pool. The rest, flooring remainders included, go to the
   IID pool.
2. Concatenate the skewed picks class by class (ascending label, sampling
   order within each label) and cut the sequence into ``n`` contiguous,
   near-equal chunks; chunk ``i`` goes to node ``i``.
3. Shuffle the IID pool and split it into ``n`` near-equal shards.

The 100-sample, 10-class, ``s = 0.8``, 4-node case gives every node 20 sorted
samples (node 0: classes 0, 1 and part of 2 after the per-class sampling) plus
5 random ones.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidArgument

__all__ = [
    "LabeledDataset",
    "PartitionSpec",
    "gen_blobs",
    "partition_iid",
    "partition_skewed",
    "partition",
    "load_csv",
    "save_csv",
]


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise InvalidArgument("features must be a (samples, d_in) matrix")
        if labels.shape != (features.shape[0],):
            raise InvalidArgument(f"{features.shape[0]} feature rows but {labels.shape[0]} labels")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise InvalidArgument(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def d_in(self) -> int:
        return self.features.shape[1]

    def subset(self, idx: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(self.features[idx], self.labels[idx], self.num_classes)

    def label_histogram(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    @staticmethod
    def concat(parts: list["LabeledDataset"]) -> "LabeledDataset":
        return LabeledDataset(
            np.concatenate([p.features for p in parts]),
            np.concatenate([p.labels for p in parts]),
            max(p.num_classes for p in parts),
        )


@dataclass(frozen=True)
class PartitionSpec:
    n_nodes: int
    skew: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_nodes < 1:
            raise InvalidArgument(f"n_nodes must be >= 1, got {self.n_nodes}")
        if not (0.0 <= self.skew <= 1.0):
            raise InvalidArgument(f"skew must lie in [0, 1], got {self.skew}")


def _class_means(num_classes: int, d_in: int, separation: float) -> np.ndarray:
    # Vertices of a regular simplex with edge length `separation`, embedded in
    # the first num_classes - 1 coordinates.
    if num_classes == 1:
        return np.zeros((1, d_in))
    if d_in < num_classes - 1:
        raise InvalidArgument(f"{num_classes} equidistant class means need d_in >= {num_classes - 1}")
    centred = np.eye(num_classes) - 1.0 / num_classes
    basis, _ = np.linalg.qr(centred[:, : num_classes - 1])
    coords = centred @ basis * (separation / np.sqrt(2.0))
    means = np.zeros((num_classes, d_in))
    means[:, : num_classes - 1] = coords
    return means


def gen_blobs(
    num_classes: int, per_class: int, d_in: int, separation: float, seed: int | np.random.Generator
) -> LabeledDataset:
    """Unit-covariance Gaussian blobs whose means are pairwise ``separation`` apart.

    Samples are returned in shuffled order.
    """
    if num_classes < 1 or per_class < 1 or d_in < 1:
        raise InvalidArgument("num_classes, per_class and d_in must all be >= 1")
    if separation < 0:
        raise InvalidArgument(f"separation must be non-negative, got {separation}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    means = _class_means(num_classes, d_in, separation)
    labels = np.repeat(np.arange(num_classes), per_class)
    features = means[labels] + rng.standard_normal((labels.shape[0], d_in))
    order = rng.permutation(labels.shape[0])
    return LabeledDataset(features[order], labels[order], num_classes)


def _rng(spec: PartitionSpec, rng: np.random.Generator | None) -> np.random.Generator:
    return rng if rng is not None else np.random.default_rng(spec.seed)


def partition_iid(
    ds: LabeledDataset, spec: PartitionSpec, rng: np.random.Generator | None = None
) -> list[LabeledDataset]:
    """Shuffle and split into ``n_nodes`` contiguous shards whose sizes differ by at most one."""
    if len(ds) == 0:
        raise InvalidArgument("cannot partition an empty dataset")
    if len(ds) < spec.n_nodes:
        raise InvalidArgument(f"{len(ds)} samples cannot fill {spec.n_nodes} nodes")
    order = _rng(spec, rng).permutation(len(ds))
    return [ds.subset(np.sort(shard)) for shard in np.array_split(order, spec.n_nodes)]


def _skewed_indices(
    ds: LabeledDataset, spec: PartitionSpec, rng: np.random.Generator
) -> list[np.ndarray]:
    skewed, pool = [], []
    for c in range(ds.num_classes):
        members = np.flatnonzero(ds.labels == c)
        if members.size == 0:
            continue
        if spec.skew > 0 and members.size < spec.n_nodes:
            raise InvalidArgument(f"class {c} has {members.size} samples, fewer than {spec.n_nodes} nodes")
        picked = rng.permutation(members)
        take = int(np.floor(spec.skew * members.size + 1e-9))
        skewed.append(picked[:take])
        pool.append(picked[take:])
    sorted_skewed = np.concatenate(skewed) if skewed else np.empty(0, dtype=np.int64)
    pool_arr = rng.permutation(np.concatenate(pool)) if pool else np.empty(0, dtype=np.int64)
    chunks = np.array_split(sorted_skewed, spec.n_nodes)
    shards = np.array_split(pool_arr, spec.n_nodes)
    return [np.concatenate([a, b]).astype(np.int64) for a, b in zip(chunks, shards)]


def partition_skewed(
    ds: LabeledDataset, spec: PartitionSpec, rng: np.random.Generator | None = None
) -> list[LabeledDataset]:
    """Label-sorted partition of a ``skew`` fraction plus an IID remainder (see module doc)."""
    if len(ds) == 0:
        raise InvalidArgument("cannot partition an empty dataset")
    if len(ds) < spec.n_nodes:
        raise InvalidArgument(f"{len(ds)} samples cannot fill {spec.n_nodes} nodes")
    return [ds.subset(idx) for idx in _skewed_indices(ds, spec, _rng(spec, rng))]


def partition(
    ds: LabeledDataset, spec: PartitionSpec, rng: np.random.Generator | None = None
) -> list[LabeledDataset]:
    """Dispatch to :func:`partition_iid` for ``skew == 0`` and :func:`partition_skewed` otherwise."""
    if spec.skew == 0:
        return partition_iid(ds, spec, rng)
    return partition_skewed(ds, spec, rng)


def load_csv(path: str | Path, num_classes: int | None = None) -> LabeledDataset:
    """Read ``feature,...,feature,label`` rows with no header.

    Raises :class:`FormatError` naming the 1-based row and column of the first
    problem.
    """
    path = Path(path)
    rows: list[list[float]] = []
    labels: list[int] = []
    width = None
    with path.open(newline="") as fh:
        for r, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                raise FormatError(f"{path}: row {r}: empty row")
            if len(row) < 2:
                raise FormatError(f"{path}: row {r}: need at least one feature and a label")
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise FormatError(f"{path}: row {r}: expected {width} columns, found {len(row)}")
            feats = []
            for c, cell in enumerate(row[:-1], start=1):
                try:
                    feats.append(float(cell))
                except ValueError:
                    raise FormatError(f"{path}: row {r}, column {c}: {cell!r} is not a number") from None
            label_text = row[-1].strip()
            try:
                label = int(label_text)
            except ValueError:
                raise FormatError(
                    f"{path}: row {r}, column {len(row)}: label {label_text!r} is not an integer"
                ) from None
            if label < 0:
                raise FormatError(f"{path}: row {r}, column {len(row)}: label {label} is negative")
            rows.append(feats)
            labels.append(label)
    if not rows:
        raise FormatError(f"{path}: file contains no samples")
    inferred = max(labels) + 1
    if num_classes is not None and num_classes < inferred:
        raise FormatError(f"{path}: label {inferred - 1} exceeds num_classes={num_classes}")
    return LabeledDataset(np.array(rows), np.array(labels), num_classes or inferred)


def save_csv(ds: LabeledDataset, path: str | Path) -> None:
    """Write ``ds`` in the format :func:`load_csv` reads, floats in round-trip repr."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for feats, label in zip(ds.features, ds.labels):
            writer.writerow([repr(float(v)) for v in feats] + [int(label)])

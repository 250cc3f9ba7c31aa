"""Bag construction with per-epoch reshuffling, plus dataset generation and I/O.

Bags are built by drawing a uniform permutation of the dataset (numpy's
Fisher-Yates shuffle, seeded per epoch) and chunking it into consecutive
groups. Shuffling is uniform, not stratified by class. Ground-truth labels
are consumed only here (to compute bag proportions) and by final test
evaluation; no other phase reads them.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .core import (
    Bag,
    EmptyBag,
    EmptyDataset,
    InvalidArguments,
    LabeledDataset,
    LabelOutOfRange,
    SimplexVector,
    check_seed,
    new_rng,
)


@dataclass(frozen=True)
class BagPlan:
    """How to partition a dataset into bags for one epoch.

    keep_partial controls the remainder chunk when the dataset size is not a
    multiple of bag_size; it defaults to True so no instance is wasted (the
    proportion losses are well defined for any bag size >= 1).
    """

    bag_size: int
    keep_partial: bool = True
    epoch_seed: int = 0

    def __post_init__(self):
        if self.bag_size < 1:
            raise InvalidArguments(f"bag_size must be >= 1, got {self.bag_size}")
        check_seed(self.epoch_seed)


def bag_proportions(labels, num_classes: int) -> SimplexVector:
    """Label histogram divided by the bag size, as a probability vector.

    Component j is count(labels == j) / len(labels), each computed with a
    single floating division of exact integer counts.
    """
    labs = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labs.size == 0:
        raise EmptyBag("cannot compute proportions of an empty bag")
    if labs.min() < 0 or labs.max() >= num_classes:
        raise LabelOutOfRange(f"labels must lie in [0, {num_classes})")
    counts = np.bincount(labs, minlength=num_classes)
    return SimplexVector(counts / labs.size)


def make_bags(dataset: LabeledDataset, plan: BagPlan) -> list[Bag]:
    """Permute the dataset with the plan's seed and chunk it into bags.

    Every instance lands in exactly one bag when keep_partial is true, and
    in at most one bag otherwise (the final short chunk is dropped for that
    epoch). Each bag carries the exact proportions of its own labels.
    """
    if dataset.n == 0:
        raise EmptyDataset("cannot build bags from an empty dataset")
    perm = new_rng(plan.epoch_seed).permutation(dataset.n)
    bags = []
    for start in range(0, dataset.n, plan.bag_size):
        chunk = perm[start : start + plan.bag_size]
        if chunk.size < plan.bag_size and not plan.keep_partial:
            break
        labels = dataset.labels[chunk]
        bags.append(
            Bag(tuple(int(i) for i in chunk), bag_proportions(labels, dataset.num_classes))
        )
    return bags


def verify_bag_proportion(bag: Bag, dataset: LabeledDataset) -> bool:
    """Exact integer-arithmetic cross-check of a bag's proportion vector.

    Recounts the indexed labels and compares each stored component to the
    float division count/size; Fractions make the comparison exact.
    """
    labels = dataset.labels[list(bag.instance_indices)]
    counts = np.bincount(labels, minlength=dataset.num_classes)
    size = bag.size
    for j in range(dataset.num_classes):
        expected = int(counts[j]) / size
        if Fraction(float(bag.proportion.values[j])) != Fraction(expected):
            return False
    return True


def gen_blobs(
    n_per_class: int,
    num_classes: int,
    dim: int,
    separation: float,
    seed: int,
) -> LabeledDataset:
    """Isotropic unit-variance Gaussian blobs, one per class.

    Class c is centered at separation * e_{c mod dim} (a one-hot direction,
    padded with zeros when dim > num_classes and tiled onto the available
    axes when dim < num_classes, in which case distinct classes can share a
    center). Deterministic per seed. Instances are emitted class by class;
    downstream bagging reshuffles them anyway.
    """
    if n_per_class < 1:
        raise InvalidArguments(f"n_per_class must be >= 1, got {n_per_class}")
    if separation < 0:
        raise InvalidArguments(f"separation must be >= 0, got {separation}")
    rng = new_rng(seed)
    feats = []
    labels = []
    for c in range(num_classes):
        center = np.zeros(dim)
        center[c % dim] = separation
        feats.append(rng.standard_normal((n_per_class, dim)) + center)
        labels.extend([c] * n_per_class)
    return LabeledDataset(np.vstack(feats), np.asarray(labels), num_classes)


def load_csv(path, num_classes: int | None = None) -> LabeledDataset:
    """Read a dataset from CSV with header f0,...,f{D-1},label."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-1] != "label" or len(header) < 2:
            raise InvalidArguments(
                f"{path}: expected header 'f0,...,f{{D-1}},label'"
            )
        dim = len(header) - 1
        if header[:dim] != [f"f{i}" for i in range(dim)]:
            raise InvalidArguments(f"{path}: feature columns must be f0..f{dim - 1}")
        feats, labels = [], []
        for row in reader:
            if not row:
                continue
            if len(row) != dim + 1:
                raise InvalidArguments(f"{path}: row has {len(row)} fields, want {dim + 1}")
            feats.append([float(v) for v in row[:dim]])
            labels.append(int(row[dim]))
    return _finish_load(path, feats, labels, dim, num_classes)


def load_jsonl(path, num_classes: int | None = None) -> LabeledDataset:
    """Read a dataset from JSON lines: {"features": [...], "label": int} per line."""
    path = Path(path)
    feats, labels = [], []
    dim = None
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            row = [float(v) for v in obj["features"]]
            if dim is None:
                dim = len(row)
            elif len(row) != dim:
                raise InvalidArguments(
                    f"{path}:{lineno}: feature length {len(row)} != {dim}"
                )
            feats.append(row)
            labels.append(int(obj["label"]))
    return _finish_load(path, feats, labels, dim or 0, num_classes)


def _finish_load(path, feats, labels, dim, num_classes):
    if not feats:
        raise EmptyDataset(f"{path}: no data rows")
    if num_classes is None:
        num_classes = max(max(labels) + 1, 2)
    return LabeledDataset(np.asarray(feats, dtype=np.float64), np.asarray(labels), num_classes)


def write_csv(dataset: LabeledDataset, path) -> None:
    """Write a dataset in the CSV ingestion format (repr floats round-trip)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"f{i}" for i in range(dataset.dim)] + ["label"])
        for x, y in zip(dataset.features, dataset.labels):
            writer.writerow([repr(float(v)) for v in x] + [int(y)])

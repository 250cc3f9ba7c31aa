"""Shared domain types, validated constructors, and seeded RNG plumbing.

Everything here is immutable after construction and safe to share across
concurrent tasks. Class labels are 0-based integers throughout; a C-class
problem uses labels {0, ..., C-1}.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

SIMPLEX_SUM_TOL = 1e-9


class LLPError(ValueError):
    """Base class for all validation and runtime errors in this package."""


class NegativeComponent(LLPError):
    pass


class SumNotOne(LLPError):
    pass


class TooFewClasses(LLPError):
    pass


class DimensionMismatch(LLPError):
    pass


class NonFiniteInput(LLPError):
    pass


class EmptyBag(LLPError):
    pass


class LabelOutOfRange(LLPError):
    pass


class EmptyDataset(LLPError):
    pass


class LengthMismatch(LLPError):
    pass


class NonPositiveAlpha(LLPError):
    pass


class ZeroNormEmbedding(LLPError):
    pass


class EmptyEvaluation(LLPError):
    pass


class KTooLarge(LLPError):
    pass


class InvalidArguments(LLPError):
    pass


class DivergedLoss(LLPError):
    """Raised when training produces non-finite parameter gradients."""


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class SimplexVector:
    """A probability vector over C >= 2 classes.

    Components are non-negative 64-bit floats summing to 1 within 1e-9.
    Construction validates and never renormalizes: a vector that fails the
    sum check is rejected so that upstream aggregation bugs surface instead
    of being masked.
    """

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(vals)):
            raise NonFiniteInput("simplex components must be finite")
        if vals.size < 2:
            raise TooFewClasses(f"need at least 2 classes, got {vals.size}")
        if np.any(vals < 0.0):
            raise NegativeComponent("simplex components must be >= 0")
        total = float(vals.sum())
        if abs(total - 1.0) > SIMPLEX_SUM_TOL:
            raise SumNotOne(f"components sum to {total!r}, not 1")
        object.__setattr__(self, "values", _readonly(vals))

    @property
    def num_classes(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.num_classes

    def __getitem__(self, idx):
        return self.values[idx]


def make_simplex(values) -> SimplexVector:
    """Validate `values` as a probability vector and wrap it.

    Raises NegativeComponent, SumNotOne, or TooFewClasses; never
    renormalizes silently.
    """
    return SimplexVector(np.asarray(values, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Feature matrix with integer class labels.

    `features` is N x D float64, `labels` is length-N int64 with every entry
    in [0, num_classes). N may be 0 (e.g. an absent validation split).
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labs = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if feats.ndim != 2:
            raise DimensionMismatch(f"features must be 2-D, got ndim={feats.ndim}")
        if feats.shape[1] < 1:
            raise DimensionMismatch("feature dimension must be >= 1")
        if not np.all(np.isfinite(feats)):
            raise NonFiniteInput("features must be finite")
        if feats.shape[0] != labs.size:
            raise LengthMismatch(
                f"{feats.shape[0]} feature rows vs {labs.size} labels"
            )
        if self.num_classes < 2:
            raise TooFewClasses(f"need at least 2 classes, got {self.num_classes}")
        if labs.size and (labs.min() < 0 or labs.max() >= self.num_classes):
            raise LabelOutOfRange(
                f"labels must lie in [0, {self.num_classes})"
            )
        object.__setattr__(self, "features", _readonly(feats))
        object.__setattr__(self, "labels", _readonly(labs))

    @property
    def n(self) -> int:
        return int(self.labels.size)

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])


@dataclass(frozen=True, eq=False)
class Bag:
    """Indices of the instances grouped together plus their label proportion."""

    instance_indices: tuple
    proportion: SimplexVector

    def __post_init__(self):
        idx = tuple(int(i) for i in self.instance_indices)
        if len(idx) < 1:
            raise EmptyBag("a bag must contain at least one instance")
        object.__setattr__(self, "instance_indices", idx)

    @property
    def size(self) -> int:
        return len(self.instance_indices)


# Seeds are plain 64-bit unsigned ints. Sub-seeds (per epoch, per trial) are
# derived by hashing so that every stream is reproducible end to end.

MAX_SEED = 2**64


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < MAX_SEED:
        raise InvalidArguments(f"seed must be in [0, 2**64), got {seed}")
    return seed


def derive_seed(seed: int, *tags) -> int:
    """Derive a sub-seed from a base seed and integer/string tags.

    Uses SHA-256 over the tag tuple, so the derivation is stable across
    platforms and Python processes (unlike builtin hash()).
    """
    h = hashlib.sha256()
    h.update(str(check_seed(seed)).encode())
    for t in tags:
        h.update(b"/")
        h.update(str(t).encode())
    return int.from_bytes(h.digest()[:8], "little")


def new_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(check_seed(seed))

"""Instance-level evaluation: confusion matrix and support-weighted P/R/F1.

Zero-division convention: a class with no predicted (or no true) instances
contributes precision (or recall) 0, and F1 is 0 when both are 0. This is
the standard "weighted" averaging behavior, under which a model predicting
a single class on balanced data scores W-R = 0.5.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import EmptyEvaluation, LabelOutOfRange, LengthMismatch


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """C x C counts, rows are true classes and columns are predicted classes."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1] or counts.shape[0] < 2:
            raise LengthMismatch(f"confusion matrix must be C x C with C >= 2, got {counts.shape}")
        if np.any(counts < 0):
            raise LabelOutOfRange("confusion counts must be non-negative")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(y_true, y_pred, num_classes: int) -> ConfusionMatrix:
    """counts[i][j] = number of instances with true class i predicted as j."""
    t = np.asarray(y_true, dtype=np.int64).reshape(-1)
    p = np.asarray(y_pred, dtype=np.int64).reshape(-1)
    if t.size != p.size:
        raise LengthMismatch(f"{t.size} true labels vs {p.size} predictions")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    if t.size:
        if t.min() < 0 or t.max() >= num_classes or p.min() < 0 or p.max() >= num_classes:
            raise LabelOutOfRange(f"labels must lie in [0, {num_classes})")
        np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts)


def weighted_prf(cm: ConfusionMatrix) -> tuple[float, float, float]:
    """Support-weighted precision, recall, and F1, each in [0, 1]."""
    counts = cm.counts
    total = counts.sum()
    if total == 0:
        raise EmptyEvaluation("no instances to evaluate")
    diag = np.diagonal(counts).astype(np.float64)
    col = counts.sum(axis=0).astype(np.float64)
    row = counts.sum(axis=1).astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(col > 0, diag / col, 0.0)
        recall = np.where(row > 0, diag / row, 0.0)
        pr = precision + recall
        f1 = np.where(pr > 0, 2.0 * precision * recall / np.where(pr > 0, pr, 1.0), 0.0)
    weights = row / total
    return (
        float(weights @ precision),
        float(weights @ recall),
        float(weights @ f1),
    )


def metrics_json(cm: ConfusionMatrix) -> str:
    """Serialize the weighted metrics and confusion counts as a JSON object."""
    wp, wr, wf = weighted_prf(cm)
    return json.dumps(
        {
            "w_precision": wp,
            "w_recall": wr,
            "w_f1": wf,
            "confusion": cm.counts.tolist(),
        },
        sort_keys=True,
    )


def metrics_csv_row(cm: ConfusionMatrix) -> str:
    """One CSV data row: w_precision,w_recall,w_f1."""
    wp, wr, wf = weighted_prf(cm)
    return f"{wp!r},{wr!r},{wf!r}"

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..core import REGION_ORDER, CmrError, Region


class EmptyMatrix(CmrError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true regions, columns predicted, both in NonCardiac/Base/Middle/Apex order."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"confusion matrix must be square, got {c.shape}")
        if np.any(c < 0) or not np.all(c == np.round(c)):
            raise ValueError("confusion counts must be non-negative integers")
        object.__setattr__(self, "counts", c.astype(np.int64))

    @classmethod
    def from_labels(cls, true: Sequence[Region], pred: Sequence[Region]) -> "ConfusionMatrix":
        m = np.zeros((len(REGION_ORDER), len(REGION_ORDER)), dtype=np.int64)
        for t, p in zip(true, pred):
            m[Region(t).code, Region(p).code] += 1
        return cls(m)


@dataclass(frozen=True)
class ClassifierMetrics:
    precision: list[Optional[float]]
    recall: list[Optional[float]]
    support: list[int]
    weighted_precision: float
    weighted_recall: float
    accuracy: float


def classifier_metrics(cm: ConfusionMatrix) -> ClassifierMetrics:
    c = cm.counts
    total = int(c.sum())
    if total == 0:
        raise EmptyMatrix("confusion matrix has no entries")
    tp = np.diag(c)
    col, row = c.sum(axis=0), c.sum(axis=1)
    precision = [int(tp[i]) / int(col[i]) if col[i] else None for i in range(len(c))]
    recall = [int(tp[i]) / int(row[i]) if row[i] else None for i in range(len(c))]
    # a class never predicted contributes zero precision at its support weight
    wp = sum((p or 0.0) * int(s) for p, s in zip(precision, row)) / total
    wr = sum((r or 0.0) * int(s) for r, s in zip(recall, row)) / total
    return ClassifierMetrics(precision, recall, [int(s) for s in row], wp, wr,
                             int(tp.sum()) / total)

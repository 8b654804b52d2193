from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import DataError


@dataclass(frozen=True)
class ConfusionMatrix:
    labels: tuple[str, ...]
    counts: np.ndarray  # rows = true, columns = predicted

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.shape != (len(self.labels), len(self.labels)) or np.any(c < 0):
            raise DataError("confusion counts must be a non-negative K x K matrix")
        object.__setattr__(self, "counts", c)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other):
        return (isinstance(other, ConfusionMatrix) and self.labels == other.labels
                and np.array_equal(self.counts, other.counts))

    def reorder(self, labels: Sequence[str]) -> "ConfusionMatrix":
        pos = [self.labels.index(lab) for lab in labels]
        return ConfusionMatrix(tuple(labels), self.counts[np.ix_(pos, pos)])


@dataclass(frozen=True)
class ClassMetrics:
    label: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class WeightedMetrics:
    precision: float
    recall: float
    f1: float
    per_class: tuple[ClassMetrics, ...]
    zero_division: tuple[str, ...]  # labels whose precision or recall was undefined

    def __iter__(self):
        return iter((self.precision, self.recall, self.f1))


def confusion(y_true: Sequence[str], y_pred: Sequence[str], labels: Sequence[str] | None = None) -> ConfusionMatrix:
    """Tally true/predicted label pairs. Labels default to the sorted union of both sides."""
    if len(y_true) != len(y_pred):
        raise DataError(f"length mismatch: {len(y_true)} true vs {len(y_pred)} predicted")
    if labels is None:
        labels = sorted(set(y_true) | set(y_pred))
    labels = tuple(labels)
    index = {lab: i for i, lab in enumerate(labels)}
    try:
        t = np.fromiter((index[v] for v in y_true), dtype=np.int64, count=len(y_true))
        p = np.fromiter((index[v] for v in y_pred), dtype=np.int64, count=len(y_pred))
    except KeyError as exc:
        raise DataError(f"label {exc.args[0]!r} is not in the taxonomy") from None
    k = len(labels)
    counts = np.bincount(t * k + p, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(labels, counts)


def weighted_metrics(m: ConfusionMatrix) -> WeightedMetrics:
    """Support-weighted precision, recall and F1.

    Undefined per-class ratios (empty row or column) are set to 0 and the
    class is listed in ``zero_division``.
    """
    if m.total == 0:
        raise DataError("cannot score an empty confusion matrix")
    c = m.counts.astype(np.float64)
    diag = np.diag(c)
    col = c.sum(axis=0)
    row = c.sum(axis=1)
    p = np.divide(diag, col, out=np.zeros_like(diag), where=col > 0)
    r = np.divide(diag, row, out=np.zeros_like(diag), where=row > 0)
    denom = p + r
    f = np.divide(2 * p * r, denom, out=np.zeros_like(diag), where=denom > 0)
    total = row.sum()
    flagged = tuple(lab for lab, cs, rs in zip(m.labels, col, row) if cs == 0 or rs == 0)
    per = tuple(ClassMetrics(lab, float(p[i]), float(r[i]), float(f[i]), int(row[i]))
                for i, lab in enumerate(m.labels))
    return WeightedMetrics(float(row @ p / total), float(row @ r / total), float(row @ f / total), per, flagged)


def weighted_f1(y_true, y_pred) -> float:
    return weighted_metrics(confusion(y_true, y_pred)).f1

"""Regression and binary-classification scores.

The positive class is "bumped" (index 1): it is the mode a separation
device is built to produce.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError


def r2_score(y, y_hat) -> float:
    """Coefficient of determination 1 - SS_res / SS_tot."""
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape or y.ndim != 1:
        raise DataError("r2_score needs two 1-D sequences of equal length")
    if len(y) < 2:
        raise DataError("r2_score needs at least two samples")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise DataError("r2 is undefined when all targets are identical")
    ss_res = float(np.sum((y - y_hat) ** 2))
    return 1.0 - ss_res / ss_tot


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise DataError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def matrix(self) -> np.ndarray:
        """Rows are the true class, columns the predicted class, zigzag first."""
        return np.array([[self.tn, self.fp], [self.fn, self.tp]], dtype=int)

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}

    @classmethod
    def from_labels(cls, y_true, y_pred, positive: int = 1) -> "Confusion":
        t = np.asarray(y_true) == positive
        p = np.asarray(y_pred) == positive
        if t.shape != p.shape:
            raise DataError("label arrays differ in length")
        return cls(tp=int(np.sum(t & p)), fp=int(np.sum(~t & p)),
                   fn=int(np.sum(t & ~p)), tn=int(np.sum(~t & ~p)))


def classification_metrics(c: Confusion) -> dict:
    """Precision, recall, F1 and accuracy; a ratio with an empty denominator is 0."""
    if c.total == 0:
        raise DataError("confusion matrix is empty")
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"precision": precision, "recall": recall, "f1": f1,
            "accuracy": (c.tp + c.tn) / c.total}

"""Confusion matrices, macro-averaged F1 and score aggregation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes, both in ``classes`` order."""
    classes: tuple
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        k = len(self.classes)
        if counts.shape != (k, k):
            raise ParameterError(f"counts must be {k}x{k}, got {counts.shape}")
        if (counts < 0).any():
            raise ParameterError("counts must be non-negative")
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def permuted(self, order: Sequence[int]) -> "ConfusionMatrix":
        order = list(order)
        return ConfusionMatrix(tuple(self.classes[i] for i in order),
                               self.counts[np.ix_(order, order)])

    def to_dict(self) -> dict:
        return {"classes": [getattr(c, "value", c) for c in self.classes],
                "counts": self.counts.tolist()}


def confusion(y_true: Sequence, y_pred: Sequence, class_list: Sequence) -> ConfusionMatrix:
    if len(y_true) != len(y_pred):
        raise ParameterError(f"length mismatch: {len(y_true)} true vs {len(y_pred)} predicted")
    index = {c: i for i, c in enumerate(class_list)}
    if len(index) != len(class_list):
        raise ParameterError("class_list contains duplicates")
    counts = np.zeros((len(class_list), len(class_list)), dtype=np.int64)
    try:
        rows = np.fromiter((index[t] for t in y_true), dtype=np.int64, count=len(y_true))
        cols = np.fromiter((index[p] for p in y_pred), dtype=np.int64, count=len(y_pred))
    except KeyError as exc:
        raise ParameterError(f"label {exc.args[0]!r} not in class list") from None
    np.add.at(counts, (rows, cols), 1)
    return ConfusionMatrix(tuple(class_list), counts)


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def per_class_scores(m: ConfusionMatrix) -> dict:
    """Precision, recall and F1 per class; every 0/0 is taken as 0."""
    diag = np.diag(m.counts).astype(float)
    col = m.counts.sum(axis=0).astype(float)
    row = m.counts.sum(axis=1).astype(float)
    out = {}
    for i, c in enumerate(m.classes):
        p = _ratio(diag[i], col[i])
        r = _ratio(diag[i], row[i])
        out[c] = {"precision": p, "recall": r, "f1": _ratio(2 * p * r, p + r)}
    return out


def f1_macro(m: ConfusionMatrix) -> float:
    """Unweighted mean of per-class F1 over the matrix's full class list."""
    if not m.classes:
        raise ParameterError("confusion matrix has no classes")
    # math.fsum keeps the result independent of class order
    return math.fsum(s["f1"] for s in per_class_scores(m).values()) / len(m.classes)


@dataclass(frozen=True)
class Summary:
    mean: float
    std: float
    n: int
    minimum: float
    maximum: float

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "n": self.n,
                "min": self.minimum, "max": self.maximum}


def summarize(values: Sequence[float]) -> Summary:
    """Mean and sample standard deviation (ddof=1; 0 for a single entry)."""
    vals = [float(v) for v in values]
    if not vals:
        return Summary(float("nan"), float("nan"), 0, float("nan"), float("nan"))
    mean = math.fsum(vals) / len(vals)
    mean = min(max(mean, min(vals)), max(vals))
    std = (math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / (len(vals) - 1))
           if len(vals) > 1 else 0.0)
    return Summary(mean, std, len(vals), min(vals), max(vals))

"""Confusion matrices, accuracy, per-class F1 and macro-F1.

Accuracy alone is misleading on skewed data: a model predicting only the
majority class scores high accuracy with near-zero macro-F1. `collapse_gap`
(accuracy minus macro-F1) is the diagnostic for that failure mode.

A class with no gold and no predicted instances gets F1 = 0 and is still
averaged by default; pass include_zero_support=False to exclude classes
with zero gold count from the macro average.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np


@dataclass
class ConfusionMatrix:
    labels: list          # ordered class names
    counts: np.ndarray    # (K, K) int64, rows = gold, columns = predicted

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        k = len(self.labels)
        if self.counts.shape != (k, k):
            raise ValueError(f"counts shape {self.counts.shape} != ({k}, {k})")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.labels != other.labels:
            raise ValueError("label axes differ")
        return ConfusionMatrix(self.labels, self.counts + other.counts)

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("," + ",".join(self.labels) + "\n")
        for name, row in zip(self.labels, self.counts):
            out.write(name + "," + ",".join(str(int(c)) for c in row) + "\n")
        return out.getvalue()

    @staticmethod
    def from_csv(text: str) -> "ConfusionMatrix":
        lines = [l for l in text.strip().splitlines() if l]
        labels = lines[0].split(",")[1:]
        counts = np.array(
            [[int(c) for c in l.split(",")[1:]] for l in lines[1:]], dtype=np.int64
        )
        return ConfusionMatrix(labels, counts)


@dataclass
class MetricReport:
    accuracy: float
    per_class_f1: np.ndarray
    macro_f1: float
    support: np.ndarray  # per-class gold counts

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "per_class_f1": [float(f) for f in self.per_class_f1],
            "support": [int(s) for s in self.support],
        }


def confusion(golds, preds, labels) -> ConfusionMatrix:
    golds = np.asarray(golds, dtype=np.int64)
    preds = np.asarray(preds, dtype=np.int64)
    if golds.shape != preds.shape:
        raise ValueError("golds and preds must have equal length")
    k = len(labels)
    if len(golds) and (golds.min() < 0 or golds.max() >= k
                       or preds.min() < 0 or preds.max() >= k):
        raise ValueError("label index outside the given label set")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (golds, preds), 1)
    return ConfusionMatrix(list(labels), counts)


def report(cm: ConfusionMatrix, include_zero_support: bool = True) -> MetricReport:
    """Accuracy, per-class F1 (0/0 ratios defined as 0) and macro-F1."""
    counts = cm.counts.astype(np.float64)
    total = counts.sum()
    tp = np.diag(counts)
    gold = counts.sum(axis=1)
    pred = counts.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(pred > 0, tp / pred, 0.0)
        recall = np.where(gold > 0, tp / gold, 0.0)
        pr = precision + recall
        f1 = np.where(pr > 0, 2.0 * precision * recall / pr, 0.0)
    if include_zero_support:
        macro = float(f1.mean()) if len(f1) else 0.0
    else:
        keep = gold > 0
        macro = float(f1[keep].mean()) if keep.any() else 0.0
    accuracy = float(tp.sum() / total) if total > 0 else 0.0
    return MetricReport(accuracy, f1, macro, cm.counts.sum(axis=1))


def collapse_gap(cm: ConfusionMatrix) -> float:
    """Accuracy minus macro-F1: large positive values flag majority-class
    collapse hidden by accuracy."""
    if len(cm.labels) < 2:
        raise ValueError("collapse gap needs at least 2 classes")
    r = report(cm)
    return r.accuracy - r.macro_f1

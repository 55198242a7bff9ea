"""Predicted probabilities, accuracy, F1 and cross-split summaries."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .dataio import CLASSES, CLASS_INDEX


def softmax(x) -> np.ndarray:
    """Max-shifted softmax over the last axis."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("softmax needs finite logits")
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class BinaryCounts:
    tp: int
    fp: int
    fn: int
    tn: int = 0

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class F1Result:
    value: float
    degenerate: bool = False

    def __float__(self):
        return self.value


def f1_score(c: BinaryCounts) -> F1Result:
    """2 tp / (2 tp + fp + fn); 0 (flagged degenerate) when tp = fp = fn = 0."""
    if min(c.tp, c.fp, c.fn, c.tn) < 0:
        raise ValueError("counts must be non-negative")
    denom = 2 * c.tp + c.fp + c.fn
    if denom == 0:
        return F1Result(0.0, degenerate=True)
    return F1Result(2 * c.tp / denom)


class ConfusionMatrix:
    """Rows are true classes, columns predicted classes, both in (NF, NR, R) order."""

    def __init__(self, counts=None):
        self.counts = np.zeros((len(CLASSES), len(CLASSES)), dtype=np.int64) if counts is None \
            else np.asarray(counts, dtype=np.int64)
        if self.counts.shape != (len(CLASSES), len(CLASSES)) or (self.counts < 0).any():
            raise ValueError("confusion matrix must be a non-negative 3x3 array")

    @classmethod
    def from_labels(cls, true: Iterable[str], pred: Iterable[str]) -> "ConfusionMatrix":
        m = np.zeros((len(CLASSES), len(CLASSES)), dtype=np.int64)
        for t, p in zip(true, pred):
            m[CLASS_INDEX[t], CLASS_INDEX[p]] += 1
        return cls(m)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def accuracy(self) -> float:
        if self.total == 0:
            raise ValueError("accuracy of an empty confusion matrix")
        return float(np.trace(self.counts) / self.total)

    def binary(self, positive: str = "NF") -> BinaryCounts:
        """One-vs-rest counts for ``positive``."""
        k = CLASS_INDEX[positive]
        tp = int(self.counts[k, k])
        fn = int(self.counts[k].sum() - tp)
        fp = int(self.counts[:, k].sum() - tp)
        return BinaryCounts(tp, fp, fn, self.total - tp - fn - fp)

    def modal_prediction(self) -> str | None:
        col = self.counts.sum(axis=0)
        return CLASSES[int(col.argmax())] if col.sum() else None

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    def to_list(self) -> list[list[int]]:
        return self.counts.tolist()


def confusion(preds: Sequence) -> ConfusionMatrix:
    """Confusion matrix of objects carrying ``label`` and ``predicted``."""
    if len(preds) == 0:
        raise ValueError("no predictions")
    return ConfusionMatrix.from_labels([p.label for p in preds], [p.predicted for p in preds])


def accuracy(preds: Sequence) -> float:
    return confusion(preds).accuracy()


@dataclass(frozen=True)
class SplitSummary:
    values: tuple[float, ...]
    mean: float
    std: float

    def format(self, scale: float = 1.0) -> str:
        return f"{self.mean * scale:.2f} ± {self.std * scale:.2f}"


def cross_split_summary(values: Sequence[float]) -> SplitSummary:
    """Mean and population (1/n) standard deviation across splits."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise ValueError("need at least two split values")
    return SplitSummary(tuple(float(x) for x in v), float(v.mean()), float(v.std(ddof=0)))


def metrics_report(per_split: dict[int, Sequence]) -> dict:
    """Accuracy, NF-F1 and confusion matrices per split plus cross-split summaries.

    Internal values are in [0, 1]; the summary strings are percentages.
    """
    report = {"classes": list(CLASSES), "splits": {}}
    accs, f1s = [], []
    total = ConfusionMatrix()
    for split_id in sorted(per_split):
        cm = confusion(per_split[split_id])
        f1 = f1_score(cm.binary("NF"))
        report["splits"][str(split_id)] = {"accuracy": cm.accuracy(), "f1_nf": f1.value,
                                           "f1_degenerate": f1.degenerate, "confusion": cm.to_list()}
        accs.append(cm.accuracy())
        f1s.append(f1.value)
        total = total + cm
    report["confusion_total"] = total.to_list()
    if len(accs) >= 2:
        a, f = cross_split_summary(accs), cross_split_summary(f1s)
        report["summary"] = {"accuracy_mean": a.mean, "accuracy_std": a.std, "f1_nf_mean": f.mean,
                             "f1_nf_std": f.std, "accuracy_pct": a.format(100), "f1_nf_pct": f.format(100)}
    return report


def dump_json(obj, path) -> None:
    """Deterministic JSON (sorted keys, fixed float repr)."""
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, allow_nan=True)
        fh.write("\n")

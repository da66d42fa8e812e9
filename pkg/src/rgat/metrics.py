"""Accuracy, per-class and macro-averaged F1 from a confusion matrix."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .head import CLASSES


@dataclass
class MetricsReport:
    accuracy: float
    macro_f1: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    confusion: list[list[int]]
    loss: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "per_class": {c: {"precision": p, "recall": r, "f1": f}
                          for c, p, r, f in zip(CLASSES, self.precision, self.recall, self.f1)},
            "confusion": self.confusion,
        }
        if self.loss is not None:
            d["loss"] = self.loss
        d.update(self.extra)
        return d


def confusion_matrix(gold, pred, n_classes=3) -> np.ndarray:
    """Rows are gold classes, columns predicted classes."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(gold, dtype=np.int64), np.asarray(pred, dtype=np.int64)), 1)
    return cm


def report_from_confusion(cm) -> MetricsReport:
    cm = np.asarray(cm, dtype=np.int64)
    total = cm.sum()
    if total == 0:
        raise ValueError("cannot score an empty prediction set")
    tp = np.diag(cm).astype(float)
    pred_tot = cm.sum(axis=0)
    gold_tot = cm.sum(axis=1)
    # classes never predicted (or never gold) score 0 rather than NaN
    precision = np.divide(tp, pred_tot, out=np.zeros_like(tp), where=pred_tot > 0)
    recall = np.divide(tp, gold_tot, out=np.zeros_like(tp), where=gold_tot > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    return MetricsReport(
        accuracy=float(tp.sum() / total),
        macro_f1=float(f1.mean()),
        precision=precision.tolist(),
        recall=recall.tolist(),
        f1=f1.tolist(),
        confusion=cm.tolist(),
    )


def score(gold, pred, n_classes=3) -> MetricsReport:
    if len(gold) == 0:
        raise ValueError("cannot score an empty prediction set")
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold labels but {len(pred)} predictions")
    return report_from_confusion(confusion_matrix(gold, pred, n_classes))

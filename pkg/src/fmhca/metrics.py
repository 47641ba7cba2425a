"""Classification metrics: confusion matrix and support-weighted scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyDataset
from .model import LABEL_TO_INDEX, LABELS


def confusion_matrix(true_labels, pred_labels) -> np.ndarray:
    """3x3 count matrix, rows = true class, cols = predicted class."""
    true_labels = np.asarray(true_labels)
    pred_labels = np.asarray(pred_labels)
    if true_labels.shape != pred_labels.shape:
        raise ValueError("label arrays must have equal length")
    cm = np.zeros((3, 3), dtype=np.int64)
    for t, p in zip(true_labels, pred_labels):
        cm[LABEL_TO_INDEX[int(t)], LABEL_TO_INDEX[int(p)]] += 1
    return cm


@dataclass
class MetricsReport:
    confusion: np.ndarray  # (3, 3) int64
    accuracy: float
    per_class_precision: np.ndarray
    per_class_recall: np.ndarray
    per_class_f1: np.ndarray
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    support: np.ndarray  # true counts per class
    total: int

    def to_dict(self) -> dict:
        return {
            "confusion": self.confusion.tolist(),
            "accuracy": self.accuracy,
            "per_class": {
                str(label): {
                    "precision": float(self.per_class_precision[i]),
                    "recall": float(self.per_class_recall[i]),
                    "f1": float(self.per_class_f1[i]),
                    "support": int(self.support[i]),
                }
                for i, label in enumerate(LABELS)
            },
            "weighted_precision": self.weighted_precision,
            "weighted_recall": self.weighted_recall,
            "weighted_f1": self.weighted_f1,
            "total": self.total,
        }

    def table(self) -> str:
        """Human-readable report."""
        lines = ["          pred -1  pred  0  pred +1"]
        for i, label in enumerate(LABELS):
            lines.append(f"true {label:+d}   " + "  ".join(f"{int(v):7d}" for v in self.confusion[i]))
        lines.append(f"accuracy           {self.accuracy:.4f}")
        lines.append(f"weighted precision {self.weighted_precision:.4f}")
        lines.append(f"weighted recall    {self.weighted_recall:.4f}")
        lines.append(f"weighted f1        {self.weighted_f1:.4f}")
        return "\n".join(lines)


def compute_metrics(confusion: np.ndarray) -> MetricsReport:
    """Derive accuracy and per-class / support-weighted scores.

    Zero-division convention: a class with no predicted (resp. true)
    instances gets precision (resp. recall) 0.  Support-weighted recall
    telescopes algebraically to accuracy, so it is computed as such.
    """
    confusion = np.asarray(confusion, dtype=np.int64)
    if confusion.shape != (3, 3):
        raise ValueError(f"confusion matrix must be 3x3, got {confusion.shape}")
    if (confusion < 0).any():
        raise ValueError("confusion matrix entries must be nonnegative")
    total = int(confusion.sum())
    if total == 0:
        raise EmptyDataset("metrics over an empty confusion matrix")
    tp = np.diag(confusion).astype(np.float64)
    support = confusion.sum(axis=1)
    predicted = confusion.sum(axis=0)
    precision = np.divide(tp, predicted, out=np.zeros(3), where=predicted > 0)
    recall = np.divide(tp, support, out=np.zeros(3), where=support > 0)
    pr_sum = precision + recall
    f1 = np.divide(2 * precision * recall, pr_sum, out=np.zeros(3), where=pr_sum > 0)
    weights = support / total
    accuracy = float(tp.sum() / total)
    return MetricsReport(
        confusion=confusion,
        accuracy=accuracy,
        per_class_precision=precision,
        per_class_recall=recall,
        per_class_f1=f1,
        weighted_precision=float((weights * precision).sum()),
        weighted_recall=accuracy,
        weighted_f1=float((weights * f1).sum()),
        support=support,
        total=total,
    )

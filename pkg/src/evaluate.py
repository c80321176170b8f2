"""
evaluate.py
Classification metrics for a trained global model.

- per-class precision / recall / F1 and their macro averages
- micro-averaged one-vs-rest ROC: every (sample, class) pair is pooled into a
  single binary problem
Undefined precision or recall (nothing predicted / nothing present) is 0.
"""

from __future__ import annotations
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np
from sklearn.metrics import (
    confusion_matrix,
    precision_recall_fscore_support,
    roc_auc_score,
    roc_curve,
)
from sklearn.preprocessing import label_binarize


# -------------------------
# Data
# -------------------------
@dataclass(frozen=True)
class EvalReport:
    loss: float
    accuracy: float
    precision: Tuple[float, ...]
    recall: Tuple[float, ...]
    f1: Tuple[float, ...]
    macro_f1: float
    macro_precision: float
    macro_recall: float
    auc_micro_ovr: float
    sample_count: int
    correct: int = 0
    roc: Tuple[Tuple[float, ...], Tuple[float, ...]] = field(default=((), ()), repr=False)

    def as_dict(self) -> Dict[str, object]:
        return {
            "loss": self.loss,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "auc_micro_ovr": self.auc_micro_ovr,
            "sample_count": self.sample_count,
            "per_class": {
                "precision": list(self.precision),
                "recall": list(self.recall),
                "f1": list(self.f1),
            },
        }


# -------------------------
# Report
# -------------------------
def one_vs_rest(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """(n, K) indicator matrix, also for K == 2."""
    onehot = label_binarize(labels, classes=np.arange(num_classes))
    if num_classes == 2:
        onehot = np.hstack([1 - onehot, onehot])
    return onehot


def classification_report(labels: np.ndarray, proba: np.ndarray, loss: float) -> EvalReport:
    labels = np.asarray(labels, dtype=np.int64)
    n, k = proba.shape
    classes = np.arange(k)
    predicted = np.argmax(proba, axis=1)

    cm = confusion_matrix(labels, predicted, labels=classes)
    correct = int(np.trace(cm))
    precision, recall, f1, _ = precision_recall_fscore_support(
        labels, predicted, labels=classes, average=None, zero_division=0
    )

    onehot = one_vs_rest(labels, k)
    fpr, tpr, _ = roc_curve(onehot.ravel(), proba.ravel())
    return EvalReport(
        loss=float(loss),
        accuracy=correct / n,
        precision=tuple(float(v) for v in precision),
        recall=tuple(float(v) for v in recall),
        f1=tuple(float(v) for v in f1),
        macro_f1=float(np.mean(f1)),
        macro_precision=float(np.mean(precision)),
        macro_recall=float(np.mean(recall)),
        auc_micro_ovr=float(roc_auc_score(onehot, proba, average="micro")),
        sample_count=int(n),
        correct=correct,
        roc=(tuple(float(v) for v in fpr), tuple(float(v) for v in tpr)),
    )

"""Accuracy, macro-F1 and the per-split metrics report."""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn.metrics import accuracy_score, confusion_matrix, f1_score, precision_recall_fscore_support

from .corpus import POLARITIES
from .errors import ContractError

LABELS = list(range(len(POLARITIES)))


def _as_labels(pred: Sequence[int], gold: Sequence[int]):
    pred_arr = np.asarray(pred, dtype=np.int64)
    gold_arr = np.asarray(gold, dtype=np.int64)
    if pred_arr.size == 0 or gold_arr.size == 0:
        raise ContractError("metrics need at least one prediction")
    if pred_arr.shape != gold_arr.shape:
        raise ContractError(f"{pred_arr.size} predictions for {gold_arr.size} gold labels")
    return pred_arr, gold_arr


def accuracy(pred: Sequence[int], gold: Sequence[int]) -> float:
    pred_arr, gold_arr = _as_labels(pred, gold)
    return float(accuracy_score(gold_arr, pred_arr))


def macro_f1(pred: Sequence[int], gold: Sequence[int], classes: int = 3) -> float:
    """Unweighted mean of per-class F1; a class with 0/0 precision or recall scores 0."""
    pred_arr, gold_arr = _as_labels(pred, gold)
    return float(
        f1_score(gold_arr, pred_arr, labels=list(range(classes)), average="macro", zero_division=0)
    )


@dataclass
class MetricsReport:
    """Split-level polarity metrics and LC-tag accuracy."""

    accuracy: float
    macro_f1: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    confusion: np.ndarray
    lc_tag_accuracy: Optional[float] = None

    @property
    def size(self) -> int:
        return int(self.confusion.sum())

    def as_row(self) -> dict:
        """Flat mapping for delimiter-separated output."""
        row = {"accuracy": self.accuracy, "macro_f1": self.macro_f1}
        for index, name in enumerate(POLARITIES):
            row[f"{name}_precision"] = float(self.precision[index])
            row[f"{name}_recall"] = float(self.recall[index])
            row[f"{name}_f1"] = float(self.f1[index])
        row["lc_tag_accuracy"] = self.lc_tag_accuracy
        return row


def build_report(
    pred: Sequence[int],
    gold: Sequence[int],
    tag_pred: Optional[np.ndarray] = None,
    tag_gold: Optional[np.ndarray] = None,
    tag_mask: Optional[np.ndarray] = None,
) -> MetricsReport:
    pred_arr, gold_arr = _as_labels(pred, gold)
    precision, recall, f1, _ = precision_recall_fscore_support(
        gold_arr, pred_arr, labels=LABELS, zero_division=0
    )
    tag_accuracy = None
    if tag_pred is not None and tag_gold is not None:
        mask = np.ones_like(tag_gold, dtype=bool) if tag_mask is None else np.asarray(tag_mask, dtype=bool)
        tag_accuracy = float((tag_pred[mask] == tag_gold[mask]).mean())
    return MetricsReport(
        accuracy=accuracy(pred_arr, gold_arr),
        macro_f1=float(f1.mean()),
        precision=precision,
        recall=recall,
        f1=f1,
        confusion=confusion_matrix(gold_arr, pred_arr, labels=LABELS),
        lc_tag_accuracy=tag_accuracy,
    )


def majority_accuracy(confusion: np.ndarray) -> float:
    """Accuracy of always predicting the most frequent gold class (rows are gold)."""
    confusion = np.asarray(confusion)
    return float(confusion.sum(axis=1).max() / confusion.sum())

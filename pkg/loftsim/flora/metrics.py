"""Confusion-matrix metrics for the attack detector"""

from dataclasses import asdict, dataclass
from typing import Optional, Sequence

from sklearn.metrics import confusion_matrix


def _ratio(numerator: float, denominator: float) -> float:
    return numerator / denominator if denominator else 0.0


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @classmethod
    def from_labels(cls, y_true: Sequence[int], y_pred: Sequence[int]) -> "ConfusionMatrix":
        tn, fp, fn, tp = confusion_matrix(y_true, y_pred, labels=[0, 1]).ravel()
        return cls(int(tp), int(fp), int(fn), int(tn))

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class ClassificationMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    fpr: float
    fnr: float
    confusion: ConfusionMatrix
    classification_rate_per_s: Optional[float] = None

    @classmethod
    def from_confusion(cls, cm: ConfusionMatrix, classification_rate_per_s: Optional[float] = None) -> "ClassificationMetrics":
        precision = _ratio(cm.tp, cm.tp + cm.fp)
        recall = _ratio(cm.tp, cm.tp + cm.fn)
        return cls(
            accuracy=_ratio(cm.tp + cm.tn, cm.total),
            precision=precision,
            recall=recall,
            f1=_ratio(2 * precision * recall, precision + recall),
            fpr=_ratio(cm.fp, cm.fp + cm.tn),
            fnr=_ratio(cm.fn, cm.fn + cm.tp),
            confusion=cm,
            classification_rate_per_s=classification_rate_per_s,
        )

    @classmethod
    def from_labels(cls, y_true: Sequence[int], y_pred: Sequence[int]) -> "ClassificationMetrics":
        return cls.from_confusion(ConfusionMatrix.from_labels(y_true, y_pred))

    def to_dict(self) -> dict:
        return asdict(self)

"""
Split evaluation of the attack detector.

Five stratified train/test splits (80/20 down to 60/40) with one shuffling
seed; each split trains a fresh model and reports confusion metrics plus the
classification rate, the median of timed prediction passes over its test set.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from sklearn.model_selection import train_test_split

from loftsim.errors import DomainError
from loftsim.flora.boosting import ClassifierParams, TrainedModel, train_classifier
from loftsim.flora.features import FEATURE_COLUMNS
from loftsim.flora.metrics import ClassificationMetrics, ConfusionMatrix

logger = logging.getLogger("Harness")

TEST_FRACTIONS = (0.20, 0.25, 0.30, 0.35, 0.40)
TIMING_PASSES = 5


@dataclass
class SplitResult:
    train_fraction: float
    test_fraction: float
    train_rows: int
    test_rows: int
    metrics: ClassificationMetrics
    test_attack_ratio: float

    def to_dict(self) -> dict:
        return {
            "split": f"{round(self.train_fraction * 100)}/{round(self.test_fraction * 100)}",
            "train_rows": self.train_rows,
            "test_rows": self.test_rows,
            "test_attack_ratio": self.test_attack_ratio,
            **self.metrics.to_dict(),
        }


@dataclass
class Evaluation:
    splits: List[SplitResult] = field(default_factory=list)
    best_index: int = 0
    best_model: Optional[TrainedModel] = None
    features: List[str] = field(default_factory=list)

    @property
    def best(self) -> SplitResult:
        return self.splits[self.best_index]

    def to_dict(self) -> dict:
        return {
            "features": self.features,
            "splits": [s.to_dict() for s in self.splits],
            "best": self.best.to_dict(),
        }


def classification_rate(model: TrainedModel, X: np.ndarray, passes: int = TIMING_PASSES) -> float:
    """Predictions per second, median over timed passes"""
    rates = []
    for _ in range(passes):
        start = time.perf_counter()
        model.predict(X)
        elapsed = time.perf_counter() - start
        rates.append(len(X) / elapsed if elapsed > 0 else float("inf"))
    return float(np.median(rates))


def evaluate_splits(
    dataset: pd.DataFrame,
    params: Optional[ClassifierParams] = None,
    features: Sequence[str] = FEATURE_COLUMNS,
    seed: int = 0,
    test_fractions: Sequence[float] = TEST_FRACTIONS,
) -> Evaluation:
    """Best split is the most accurate one; ties go to the larger training share"""
    params = params or ClassifierParams()
    if dataset.empty or dataset["label"].nunique() < 2:
        raise DomainError("Evaluation needs a dataset with both classes")
    features = list(features)
    X = dataset[features].to_numpy(dtype=float)
    y = dataset["label"].to_numpy(dtype=int)

    evaluation = Evaluation(features=features)
    models = []
    for fraction in test_fractions:
        X_train, X_test, y_train, y_test = train_test_split(X, y, test_size=fraction, stratify=y, random_state=seed)
        model = train_classifier(X_train, y_train, params, feature_names=features)
        cm = ConfusionMatrix.from_labels(y_test, model.predict(X_test))
        metrics = ClassificationMetrics.from_confusion(cm, classification_rate(model, X_test))
        split = SplitResult(1.0 - fraction, fraction, len(y_train), len(y_test), metrics, float(np.mean(y_test)))
        evaluation.splits.append(split)
        models.append(model)
        logger.info(f"Split {split.to_dict()['split']}: accuracy {metrics.accuracy:.4f}, "
                    f"FPR {metrics.fpr:.4f}, FNR {metrics.fnr:.4f}, F1 {metrics.f1:.4f}")

    evaluation.best_index = max(
        range(len(evaluation.splits)),
        key=lambda i: (evaluation.splits[i].metrics.accuracy, evaluation.splits[i].train_fraction),
    )
    evaluation.best_model = models[evaluation.best_index]
    return evaluation

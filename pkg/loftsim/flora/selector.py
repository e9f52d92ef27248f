"""
Recursive feature elimination with stratified cross-validation.

At each step the classifier is fitted on the full dataset to rank the
remaining features by loss-reduction importance, the current subset is scored
by k-fold accuracy, and the least important feature is dropped. The subset
with the best mean accuracy wins; ties go to the smaller subset.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from sklearn.base import clone
from sklearn.model_selection import StratifiedKFold, cross_val_score

from loftsim.errors import DomainError
from loftsim.flora.boosting import ClassifierParams, ObliviousBoostingClassifier

logger = logging.getLogger("FloRa")


@dataclass
class SelectionResult:
    selected: List[str]
    ranking: Dict[str, int]
    importances: Dict[str, float]
    cv_scores: Dict[int, float] = field(default_factory=dict)


def rfecv_select(
    X: pd.DataFrame,
    y: Sequence[int],
    params: Optional[ClassifierParams] = None,
    folds: int = 5,
    step: int = 1,
    min_features: int = 1,
) -> SelectionResult:
    """
    Returns the selected subset plus a ranking where 1 marks selected features
    and larger ranks were eliminated earlier.
    """
    params = params or ClassifierParams(tree_count=60, max_depth=4)
    y = np.asarray(y).astype(int)
    classes, counts = np.unique(y, return_counts=True)
    if classes.size < 2:
        raise DomainError("Feature selection needs both classes")
    if folds < 2 or folds > len(y) or counts.min() < folds:
        raise DomainError(f"{folds} folds need at least {folds} samples per class, got {counts.tolist()}")
    if step < 1:
        raise DomainError(f"step must be positive, got {step}")

    estimator = ObliviousBoostingClassifier(**vars(params))
    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=params.seed)
    remaining = list(X.columns)
    eliminated: List[List[str]] = []
    importances: Dict[str, float] = {}
    scores: Dict[int, float] = {}
    subsets: Dict[int, List[str]] = {}

    while True:
        matrix = X[remaining].to_numpy(dtype=float)
        score = float(np.mean(cross_val_score(clone(estimator), matrix, y, cv=splitter, scoring="accuracy")))
        scores[len(remaining)] = score
        subsets[len(remaining)] = list(remaining)
        fitted = clone(estimator).fit(matrix, y)
        current = dict(zip(remaining, fitted.feature_importances_.tolist()))
        importances.update(current)
        logger.debug(f"RFECV {len(remaining)} features: accuracy {score:.4f}")
        if len(remaining) <= min_features:
            break
        drop = min(step, len(remaining) - min_features)
        # stable order: lowest importance first, column order on ties
        order = sorted(range(len(remaining)), key=lambda i: (current[remaining[i]], i))
        dropped = [remaining[i] for i in order[:drop]]
        eliminated.append(dropped)
        remaining = [name for name in remaining if name not in dropped]

    best_size = min(scores, key=lambda size: (-round(scores[size], 12), size))
    selected = subsets[best_size]
    ranking = {name: 1 for name in selected}
    rank = 1
    for group in reversed(eliminated):
        kept = [name for name in group if name not in ranking]
        if kept:
            rank += 1
            for name in kept:
                ranking[name] = rank
    logger.info(f"RFECV selected {len(selected)}/{X.shape[1]} features (CV accuracy {scores[best_size]:.4f})")
    return SelectionResult(selected, ranking, importances, scores)

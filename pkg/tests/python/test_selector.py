"""Recursive feature elimination"""

import numpy as np
import pandas as pd
import pytest

from loftsim.errors import DomainError
from loftsim.flora.boosting import ClassifierParams
from loftsim.flora.selector import rfecv_select

PARAMS = ClassifierParams(tree_count=15, max_depth=2, seed=1)


def _frame(n=240, seed=2):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    frame = pd.DataFrame({
        "noise_a": rng.normal(size=n),
        "signal": np.where(y == 1, rng.uniform(1.0, 2.0, n), rng.uniform(-2.0, -1.0, n)),
        "noise_b": rng.uniform(size=n),
        "noise_c": rng.integers(0, 3, n).astype(float),
    })
    return frame, y


def test_noise_features_are_eliminated():
    frame, y = _frame()
    result = rfecv_select(frame, y, PARAMS, folds=3)
    assert result.selected == ["signal"]
    assert result.ranking["signal"] == 1
    assert all(result.ranking[name] > 1 for name in ("noise_a", "noise_b", "noise_c"))
    assert sorted(result.cv_scores) == [1, 2, 3, 4]
    assert result.cv_scores[1] == 1.0


def test_single_feature():
    frame, y = _frame()
    result = rfecv_select(frame[["signal"]], y, PARAMS, folds=3)
    assert result.selected == ["signal"]
    assert result.cv_scores == {1: 1.0}


def test_invalid_selection_inputs():
    frame, y = _frame(8)
    with pytest.raises(DomainError):
        rfecv_select(frame, y, PARAMS, folds=5)
    with pytest.raises(DomainError):
        rfecv_select(frame, np.zeros(8, dtype=int), PARAMS, folds=2)
    with pytest.raises(DomainError):
        rfecv_select(frame, y, PARAMS, folds=2, step=0)

"""
Gradient Boosting over Oblivious Trees

Binary classifier with logistic loss:
- Symmetric trees: every level tests one (feature, border) pair for all nodes
- Newton leaf values -G / (H + l2_leaf_reg)
- Histogram split search over quantile borders
- Seeded 80% row subsample per tree, or ordered leaf estimates for the
  training-time update when boosting_type is "ordered"
- Loss-reduction feature importances
- Versioned JSON model documents

Usage:
    model = train_classifier(X, y, ClassifierParams(tree_count=200), feature_names=FEATURE_COLUMNS)
    probability, label = predict_flow(model, vector)
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin

from loftsim.errors import DomainError, ModelError

logger = logging.getLogger("FloRa")

MODEL_FORMAT_VERSION = 1


@dataclass
class ClassifierParams:
    tree_count: int = 200
    max_depth: int = 6
    learning_rate: float = 0.1
    l2_leaf_reg: float = 3.0
    seed: int = 0
    subsample: float = 0.8
    border_count: int = 254
    boosting_type: str = "plain"

    def __post_init__(self):
        if self.tree_count < 0 or not 1 <= self.max_depth <= 16:
            raise DomainError(f"Invalid tree_count/max_depth: {self.tree_count}/{self.max_depth}")
        if self.learning_rate <= 0 or self.l2_leaf_reg < 0 or not 0 < self.subsample <= 1:
            raise DomainError("learning_rate must be positive, l2_leaf_reg non-negative, subsample in (0, 1]")
        if self.boosting_type not in ("plain", "ordered"):
            raise DomainError(f"Unknown boosting_type {self.boosting_type}")


# ============ Loss ============

def logistic_loss(y: np.ndarray, raw: np.ndarray) -> float:
    """Mean negative log likelihood of labels y under raw scores"""
    return float(np.mean(np.logaddexp(0.0, raw) - y * raw))


def logistic_gradient(y: np.ndarray, raw: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per-sample first and second derivative of the loss with respect to the raw score"""
    p = expit(raw)
    return p - y, np.maximum(p * (1.0 - p), 1e-16)


# ============ Trees ============

@dataclass
class ObliviousTree:
    features: List[int]
    thresholds: List[float]
    leaf_values: List[float]

    @property
    def depth(self) -> int:
        return len(self.features)

    def leaf_index(self, X: np.ndarray) -> np.ndarray:
        index = np.zeros(X.shape[0], dtype=np.int64)
        for feature, threshold in zip(self.features, self.thresholds):
            index = (index << 1) | (X[:, feature] > threshold)
        return index

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.leaf_values)[self.leaf_index(X)]

    def to_dict(self) -> dict:
        return {
            "levels": [[int(f), float(t)] for f, t in zip(self.features, self.thresholds)],
            "leaf_values": [float(v) for v in self.leaf_values],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ObliviousTree":
        levels = data["levels"]
        tree = cls([int(f) for f, _ in levels], [float(t) for _, t in levels], [float(v) for v in data["leaf_values"]])
        if len(tree.leaf_values) != 2 ** tree.depth:
            raise ModelError(f"Tree of depth {tree.depth} needs {2 ** tree.depth} leaves, got {len(tree.leaf_values)}")
        return tree


@dataclass
class TrainedModel:
    feature_names: List[str]
    trees: List[ObliviousTree] = field(default_factory=list)
    learning_rate: float = 0.1
    max_depth: int = 6
    l2_leaf_reg: float = 3.0
    seed: int = 0
    importances: Dict[str, float] = field(default_factory=dict)

    @property
    def tree_count(self) -> int:
        return len(self.trees)

    def _matrix(self, X: Union[np.ndarray, Sequence[Mapping[str, float]]]) -> np.ndarray:
        if isinstance(X, np.ndarray):
            matrix = X if X.ndim == 2 else X.reshape(1, -1)
            if matrix.shape[1] != len(self.feature_names):
                raise ModelError(f"Expected {len(self.feature_names)} features, got {matrix.shape[1]}")
            return matrix.astype(float)
        rows = []
        for record in X:
            missing = [name for name in self.feature_names if name not in record]
            if missing:
                raise ModelError(f"Missing features for prediction: {missing}")
            rows.append([float(record[name]) for name in self.feature_names])
        return np.asarray(rows, dtype=float).reshape(-1, len(self.feature_names))

    def decision_function(self, X) -> np.ndarray:
        matrix = self._matrix(X)
        raw = np.zeros(matrix.shape[0])
        for tree in self.trees:
            raw += self.learning_rate * tree.predict(matrix)
        return raw

    def predict_proba(self, X) -> np.ndarray:
        return expit(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(int)

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "feature_names": list(self.feature_names),
            "learning_rate": self.learning_rate,
            "max_depth": self.max_depth,
            "l2_leaf_reg": self.l2_leaf_reg,
            "seed": self.seed,
            "tree_count": self.tree_count,
            "importances": {k: float(v) for k, v in self.importances.items()},
            "trees": [tree.to_dict() for tree in self.trees],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrainedModel":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ModelError(f"Model document is not valid JSON: {e}")
        if data.get("format_version") != MODEL_FORMAT_VERSION:
            raise ModelError(f"Unsupported model format_version {data.get('format_version')}")
        try:
            return cls(
                feature_names=list(data["feature_names"]),
                trees=[ObliviousTree.from_dict(t) for t in data["trees"]],
                learning_rate=float(data["learning_rate"]),
                max_depth=int(data["max_depth"]),
                l2_leaf_reg=float(data["l2_leaf_reg"]),
                seed=int(data["seed"]),
                importances={k: float(v) for k, v in data.get("importances", {}).items()},
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ModelError(f"Malformed model document: {e}")


# ============ Training ============

def compute_borders(column: np.ndarray, border_count: int) -> np.ndarray:
    """Split candidates: midpoints between distinct values, thinned to quantiles"""
    values = np.unique(column)
    if values.size < 2:
        return np.empty(0)
    if values.size - 1 > border_count:
        values = np.unique(np.quantile(column, np.linspace(0.0, 1.0, border_count + 2), method="lower"))
    return (values[:-1] + values[1:]) / 2.0


def _leaf_values(g_sum: np.ndarray, h_sum: np.ndarray, l2: float) -> np.ndarray:
    return -g_sum / (h_sum + l2 + 1e-12)


def _score(g: np.ndarray, h: np.ndarray, l2: float) -> np.ndarray:
    return g * g / (h + l2 + 1e-12)


def _ordered_values(leaf: np.ndarray, g: np.ndarray, h: np.ndarray, l2: float, order: np.ndarray) -> np.ndarray:
    """Leaf value for each row estimated only from rows preceding it in a permutation"""
    values = np.zeros(len(leaf))
    ordered_leaf = leaf[order]
    for value in np.unique(ordered_leaf):
        positions = order[ordered_leaf == value]
        g_prev = np.cumsum(g[positions]) - g[positions]
        h_prev = np.cumsum(h[positions]) - h[positions]
        values[positions] = _leaf_values(g_prev, h_prev, l2)
    return values


def _fit_tree(
    bins: List[np.ndarray],
    borders: List[np.ndarray],
    g: np.ndarray,
    h: np.ndarray,
    params: ClassifierParams,
    importances: np.ndarray,
) -> Tuple[ObliviousTree, np.ndarray]:
    """Grow one oblivious tree level by level; returns the tree and each row's leaf"""
    n = g.shape[0]
    l2 = params.l2_leaf_reg
    leaf = np.zeros(n, dtype=np.int64)
    features: List[int] = []
    thresholds: List[float] = []

    for level in range(params.max_depth):
        n_leaves = 1 << level
        g_leaf = np.bincount(leaf, weights=g, minlength=n_leaves)
        h_leaf = np.bincount(leaf, weights=h, minlength=n_leaves)
        parent_score = float(_score(g_leaf, h_leaf, l2).sum())

        best: Optional[Tuple[float, int, int]] = None
        for f, (column_bins, column_borders) in enumerate(zip(bins, borders)):
            nb = column_borders.size
            if nb == 0:
                continue
            slot = leaf * (nb + 1) + column_bins
            g_hist = np.bincount(slot, weights=g, minlength=n_leaves * (nb + 1)).reshape(n_leaves, nb + 1)
            h_hist = np.bincount(slot, weights=h, minlength=n_leaves * (nb + 1)).reshape(n_leaves, nb + 1)
            g_left = np.cumsum(g_hist, axis=1)[:, :nb]
            h_left = np.cumsum(h_hist, axis=1)[:, :nb]
            scores = (_score(g_left, h_left, l2) + _score(g_leaf[:, None] - g_left, h_leaf[:, None] - h_left, l2)).sum(axis=0)
            j = int(np.argmax(scores))
            if best is None or scores[j] > best[0] + 1e-12:
                best = (float(scores[j]), f, j)

        if best is None:
            break
        score, f, j = best
        importances[f] += max(score - parent_score, 0.0) / 2.0
        features.append(f)
        thresholds.append(float(borders[f][j]))
        leaf = (leaf << 1) | (bins[f] > j)

    n_leaves = 1 << len(features)
    g_leaf = np.bincount(leaf, weights=g, minlength=n_leaves)
    h_leaf = np.bincount(leaf, weights=h, minlength=n_leaves)
    tree = ObliviousTree(features, thresholds, _leaf_values(g_leaf, h_leaf, l2).tolist())
    return tree, leaf


def train_classifier(
    X: np.ndarray,
    y: np.ndarray,
    params: Optional[ClassifierParams] = None,
    feature_names: Optional[Sequence[str]] = None,
) -> TrainedModel:
    """Boost ``params.tree_count`` oblivious trees on a binary target; deterministic per seed"""
    params = params or ClassifierParams()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] == 0:
        raise DomainError(f"Training data shape mismatch: X{X.shape} y{y.shape}")
    classes = np.unique(y)
    if classes.size < 2 or not set(classes.tolist()) <= {0.0, 1.0}:
        raise DomainError(f"Training needs both classes 0 and 1, got {classes.tolist()}")
    names = list(feature_names) if feature_names is not None else [f"f{i}" for i in range(X.shape[1])]
    if len(names) != X.shape[1]:
        raise DomainError(f"{len(names)} feature names for {X.shape[1]} columns")

    rng = np.random.default_rng(params.seed)
    borders = [compute_borders(X[:, f], params.border_count) for f in range(X.shape[1])]
    bins = [np.searchsorted(b, X[:, f], side="left") for f, b in enumerate(borders)]
    importances = np.zeros(X.shape[1])
    raw = np.zeros(X.shape[0])
    trees: List[ObliviousTree] = []

    for _ in range(params.tree_count):
        g, h = logistic_gradient(y, raw)
        if params.boosting_type == "ordered":
            rows = np.arange(X.shape[0])
        elif params.subsample < 1.0:
            rows = np.sort(rng.choice(X.shape[0], size=max(2, int(round(params.subsample * X.shape[0]))), replace=False))
        else:
            rows = np.arange(X.shape[0])
        tree, _ = _fit_tree([b[rows] for b in bins], borders, g[rows], h[rows], params, importances)
        trees.append(tree)
        if params.boosting_type == "ordered":
            leaf = tree.leaf_index(X)
            raw += params.learning_rate * _ordered_values(leaf, g, h, params.l2_leaf_reg, rng.permutation(X.shape[0]))
        else:
            raw += params.learning_rate * tree.predict(X)

    total = importances.sum()
    normalized = importances / total * 100.0 if total > 0 else importances
    model = TrainedModel(
        feature_names=names,
        trees=trees,
        learning_rate=params.learning_rate,
        max_depth=params.max_depth,
        l2_leaf_reg=params.l2_leaf_reg,
        seed=params.seed,
        importances=dict(zip(names, normalized.tolist())),
    )
    logger.info(f"Trained {len(trees)} trees on {X.shape[0]} rows, train loss {logistic_loss(y, model.decision_function(X)):.4f}")
    return model


def predict_flow(model: TrainedModel, vector) -> Tuple[float, int]:
    """(probability, label) for one FeatureVector or feature mapping"""
    record = vector if isinstance(vector, Mapping) else vector.as_dict()
    probability = float(model.predict_proba([record])[0])
    return probability, int(probability >= 0.5)


# ============ Estimator Wrapper ============

class ObliviousBoostingClassifier(ClassifierMixin, BaseEstimator):
    """scikit-learn estimator around train_classifier, for CV and feature selection"""

    def __init__(self, tree_count=200, max_depth=6, learning_rate=0.1, l2_leaf_reg=3.0, seed=0,
                 subsample=0.8, border_count=254, boosting_type="plain"):
        self.tree_count = tree_count
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.l2_leaf_reg = l2_leaf_reg
        self.seed = seed
        self.subsample = subsample
        self.border_count = border_count
        self.boosting_type = boosting_type

    def _params(self) -> ClassifierParams:
        return ClassifierParams(self.tree_count, self.max_depth, self.learning_rate, self.l2_leaf_reg,
                                self.seed, self.subsample, self.border_count, self.boosting_type)

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        self.model_ = train_classifier(X, np.asarray(y), self._params())
        return self

    @property
    def feature_importances_(self) -> np.ndarray:
        return np.array([self.model_.importances[name] for name in self.model_.feature_names])

    def predict_proba(self, X) -> np.ndarray:
        p = self.model_.predict_proba(np.asarray(X, dtype=float))
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return self.model_.predict(np.asarray(X, dtype=float))

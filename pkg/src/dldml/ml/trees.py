"""Regression trees, bagged forests and gradient boosting.

Split search is delegated to scikit-learn's CART implementation; the
fitted trees are copied into flat arrays that this module owns, predicts
with and serialises as nested node records.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.tree import DecisionTreeRegressor

from ..errors import ConfigurationError, DataError


@dataclass
class Tree:
    feature: np.ndarray    # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @classmethod
    def constant(cls, value: float) -> "Tree":
        return cls(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]),
                   np.array([float(value)]))

    @property
    def n_nodes(self) -> int:
        return len(self.value)

    def predict(self, X) -> np.ndarray:
        # the split search compared single-precision features; do the same
        X = np.asarray(X, dtype=float).astype(np.float32).astype(float)
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            i = np.nonzero(active)[0]
            nd = node[i]
            go_left = X[i, self.feature[nd]] <= self.threshold[nd]
            node[i] = np.where(go_left, self.left[nd], self.right[nd])
            active[i] = self.feature[node[i]] >= 0
        return self.value[node]

    def to_record(self, i: int = 0) -> dict:
        if self.feature[i] < 0:
            return {"value": float(self.value[i])}
        return {"feature": int(self.feature[i]), "threshold": float(self.threshold[i]),
                "left": self.to_record(int(self.left[i])),
                "right": self.to_record(int(self.right[i]))}

    @classmethod
    def from_record(cls, record: dict) -> "Tree":
        feat, thr, lo, hi, val = [], [], [], [], []

        def add(rec):
            k = len(feat)
            feat.append(-1); thr.append(0.0); lo.append(-1); hi.append(-1)
            val.append(float(rec.get("value", 0.0)))
            if "feature" in rec:
                feat[k] = int(rec["feature"])
                thr[k] = float(rec["threshold"])
                lo[k] = add(rec["left"])
                hi[k] = add(rec["right"])
            return k

        try:
            add(record)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed tree record: {exc}") from None
        return cls(np.array(feat), np.array(thr), np.array(lo), np.array(hi), np.array(val))


def fit_tree(X, y, max_depth=None, min_leaf=1, max_features=1.0, random_state=0) -> Tree:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise DataError("cannot fit a tree to no samples")
    if max_depth == 0:
        return Tree.constant(y.mean())
    reg = DecisionTreeRegressor(max_depth=max_depth, min_samples_leaf=min_leaf,
                                max_features=max_features, random_state=random_state)
    t = reg.fit(X, y).tree_
    feature = np.where(t.children_left < 0, -1, t.feature).astype(np.int64)
    return Tree(feature, t.threshold.astype(float), t.children_left.astype(np.int64),
                t.children_right.astype(np.int64), t.value[:, 0, 0].astype(float))


def _seed_stream(seed: int, count: int) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, 2**31 - 1, size=count)


class RandomForest:
    """Bootstrap-aggregated regression trees, prediction = mean over trees.

    A depth-0 tree has no split for the bootstrap to influence, so it is
    the plain training mean.
    """

    def __init__(self, trees: list):
        self.trees = trees

    @classmethod
    def fit(cls, X, y, n_trees=100, max_depth=None, min_leaf=1, feature_subsample=1.0,
            seed=0) -> "RandomForest":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if len(y) < 2:
            raise DataError("random forest needs at least two samples")
        if n_trees < 1:
            raise ConfigurationError("n_trees must be >= 1")
        if not 0.0 < feature_subsample <= 1.0:
            raise ConfigurationError("feature_subsample must lie in (0, 1]")
        rng = np.random.default_rng(seed)
        trees = []
        for tree_seed in _seed_stream(seed, n_trees):
            if max_depth == 0:
                trees.append(Tree.constant(y.mean()))
                continue
            idx = rng.integers(0, len(y), len(y))
            trees.append(fit_tree(X[idx], y[idx], max_depth, min_leaf, feature_subsample,
                                  int(tree_seed)))
        return cls(trees)

    def predict(self, X) -> np.ndarray:
        return np.mean([t.predict(X) for t in self.trees], axis=0)


class GradientBoosting:
    """Least-squares boosting: mean, then shrunken trees fitted to residuals.

    A stage whose addition would raise the training loss is rejected and
    boosting stops there, so the recorded loss never increases.
    """

    def __init__(self, init: float, learning_rate: float, trees: list, losses: list):
        self.init = init
        self.learning_rate = learning_rate
        self.trees = trees
        self.losses = losses

    @classmethod
    def fit(cls, X, y, n_stages=100, learning_rate=0.1, max_depth=3, min_leaf=1,
            seed=0) -> "GradientBoosting":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if len(y) < 2:
            raise DataError("gradient boosting needs at least two samples")
        if n_stages < 0 or learning_rate < 0:
            raise ConfigurationError("n_stages and learning_rate must be non-negative")
        init = float(y.mean())
        F = np.full(len(y), init)
        losses = [float(np.mean((y - F) ** 2))]
        trees = []
        if learning_rate == 0.0:
            return cls(init, learning_rate, trees, losses)
        for stage_seed in _seed_stream(seed, n_stages):
            tree = fit_tree(X, y - F, max_depth, min_leaf, 1.0, int(stage_seed))
            F_new = F + learning_rate * tree.predict(X)
            loss = float(np.mean((y - F_new) ** 2))
            if loss > losses[-1]:
                break
            trees.append(tree)
            losses.append(loss)
            F = F_new
        return cls(init, learning_rate, trees, losses)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.full(len(X), self.init)
        for t in self.trees:
            out += self.learning_rate * t.predict(X)
        return out

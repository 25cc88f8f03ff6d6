"""k-nearest-neighbour regression and classification on already scaled features."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from ..errors import ConfigurationError, DataError

WEIGHTINGS = ("uniform", "distance")


def _check(k, weighting, n):
    if n == 0:
        raise DataError("kNN needs a non-empty training set")
    if not 1 <= k <= n:
        raise ConfigurationError(f"k must lie in [1, {n}], got {k}")
    if weighting not in WEIGHTINGS:
        raise ConfigurationError(f"weighting must be one of {WEIGHTINGS}")


def _neighbour_weights(dist: np.ndarray, weighting: str) -> np.ndarray:
    if weighting == "uniform":
        return np.ones_like(dist)
    # inverse distance; an exact hit takes all the weight (shared among exact hits)
    exact = dist == 0.0
    with np.errstate(divide="ignore"):
        w = 1.0 / dist
    hit = exact.any(axis=1)
    w[hit] = exact[hit].astype(float)
    return w


class _Knn:
    def __init__(self, X, y, k, weighting):
        X = np.asarray(X, dtype=float)
        _check(k, weighting, len(X))
        self.X = X
        self.y = np.asarray(y)
        self.k = int(k)
        self.weighting = weighting
        self._tree = cKDTree(X)

    def _query(self, Q):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        dist, idx = self._tree.query(Q, k=self.k)
        return dist.reshape(len(Q), self.k), idx.reshape(len(Q), self.k)


class KnnRegressor(_Knn):
    def predict(self, Q) -> np.ndarray:
        dist, idx = self._query(Q)
        w = _neighbour_weights(dist, self.weighting)
        return (w * self.y[idx]).sum(axis=1) / w.sum(axis=1)


class KnnClassifier(_Knn):
    """Weighted majority vote; a tie goes to the smaller class index."""

    def __init__(self, X, y, k, weighting="uniform", n_classes=2):
        super().__init__(X, np.asarray(y, dtype=int), k, weighting)
        self.n_classes = n_classes

    def predict(self, Q) -> np.ndarray:
        dist, idx = self._query(Q)
        w = _neighbour_weights(dist, self.weighting)
        votes = np.zeros((len(dist), self.n_classes))
        labels = self.y[idx]
        for c in range(self.n_classes):
            votes[:, c] = np.where(labels == c, w, 0.0).sum(axis=1)
        return np.argmax(votes, axis=1)  # first maximum = smaller index on ties

"""Stratified k-fold assignment, cross-validation and grid search."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, StratificationError


def stratified_kfold(labels, folds: int = 5, seed: int = 0) -> np.ndarray:
    """Fold index for every item, class-balanced and size-balanced within one.

    Each class is shuffled with the seeded generator and dealt round-robin;
    the dealing position carries over from one class to the next so total
    fold sizes also differ by at most one.
    """
    labels = np.asarray(labels)
    if folds < 2:
        raise ConfigurationError("need at least two folds")
    classes, counts = np.unique(labels, return_counts=True)
    if len(labels) < folds:
        raise StratificationError(f"{len(labels)} items cannot fill {folds} folds")
    if len(classes) > 1 and counts.min() < folds:
        raise StratificationError(
            f"class {classes[counts.argmin()]} has {counts.min()} items, fewer than {folds} folds")
    rng = np.random.default_rng(seed)
    out = np.empty(len(labels), dtype=int)
    pos = 0
    for c in classes:
        idx = np.nonzero(labels == c)[0]
        idx = idx[rng.permutation(len(idx))]
        out[idx] = (pos + np.arange(len(idx))) % folds
        pos = (pos + len(idx)) % folds
    return out


def expand_grid(grid: dict) -> list:
    """All combinations of a {name: [values]} grid, in row-major order."""
    if not grid:
        return [{}]
    names = list(grid)
    for n in names:
        if not isinstance(grid[n], (list, tuple)) or not grid[n]:
            raise ConfigurationError(f"grid entry {n!r} must be a non-empty list")
    return [dict(zip(names, combo)) for combo in itertools.product(*(grid[n] for n in names))]


def complexity(params: dict) -> tuple:
    """Ordering used to break score ties in favour of the simpler model."""
    def size(v):
        if v is None:
            return math.inf
        if isinstance(v, (list, tuple)):
            return float(sum(v))
        return float(v) if isinstance(v, (int, float)) else 0.0

    keys = ("k", "n_trees", "n_stages", "layer_sizes", "max_depth")
    return tuple(size(params.get(k)) for k in keys)


@dataclass
class GridResult:
    best_params: dict
    best_score: float
    table: list  # one row per grid point: params, fold scores, mean

    def to_dict(self) -> dict:
        return {"best_params": self.best_params, "best_score": self.best_score,
                "table": self.table}


def cross_validate(fit_score, n_items: int, fold_of: np.ndarray, params: dict) -> list:
    """Scores of ``fit_score(params, train_idx, val_idx)`` over each fold in order."""
    scores = []
    for f in range(int(fold_of.max()) + 1):
        val = np.nonzero(fold_of == f)[0]
        train = np.nonzero(fold_of != f)[0]
        scores.append(float(fit_score(params, train, val)))
    return scores


def grid_search(fit_score, grid: dict, n_items: int, fold_of: np.ndarray,
                admissible=None) -> GridResult:
    """Highest mean validation score wins; ties go to the simpler model, then grid order.

    ``admissible(params)`` may veto grid points that cannot be fitted on the
    folds at hand (a k larger than a fold's training part, say).
    """
    rows = []
    for gi, params in enumerate(expand_grid(grid)):
        if admissible is not None and not admissible(params):
            continue
        scores = cross_validate(fit_score, n_items, fold_of, params)
        rows.append({"index": gi, "params": params, "fold_scores": scores,
                     "mean": float(np.mean(scores)), "std": float(np.std(scores))})
    if not rows:
        raise ConfigurationError("no grid point can be fitted on these folds")
    best = min(rows, key=lambda r: (-r["mean"], complexity(r["params"]), r["index"]))
    return GridResult(best_params=best["params"], best_score=best["mean"], table=rows)

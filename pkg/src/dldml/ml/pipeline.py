"""Grid search, final fit and evaluation of a model on a split dataset."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dataset import (ClassificationTable, Dataset, RegressionTable, SplitDataset,
                       flatten_for_classification, flatten_for_regression)
from ..errors import ConfigurationError, DataError
from .metrics import Confusion, classification_metrics, r2_score
from .models import DEFAULT_GRIDS, REGRESSORS, TrainedModel, check_kind, fit_model
from .selection import GridResult, grid_search, stratified_kfold

REPORT_FORMAT = 1


@dataclass(frozen=True)
class TrainingConfig:
    folds: int = 5
    seed: int = 0
    train_samples_per_case: int | None = 250
    eval_samples_per_case: int | None = 1000
    grids: dict = field(default_factory=dict)  # kind -> grid, overrides DEFAULT_GRIDS

    def grid_for(self, kind: str) -> dict:
        return self.grids.get(kind, DEFAULT_GRIDS[kind])


@dataclass
class EvalReport:
    kind: str
    hyperparameters: dict
    metrics: dict          # split -> metrics (r2, or precision/recall/f1/accuracy)
    confusion: dict = field(default_factory=dict)  # split -> Confusion (classifiers)
    cv: GridResult | None = None
    counts: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"format_version": REPORT_FORMAT, "kind": self.kind,
                "hyperparameters": self.hyperparameters, "metrics": self.metrics,
                "confusion": {k: v.to_dict() for k, v in self.confusion.items()},
                "cross_validation": self.cv.to_dict() if self.cv else None,
                "counts": self.counts, "info": self.info}


def partition_tables(kind, dataset: Dataset, split: SplitDataset, cfg: TrainingConfig):
    if kind in REGRESSORS:
        train = flatten_for_regression(dataset.cases, cfg.train_samples_per_case)
        test = flatten_for_regression(dataset.cases, cfg.eval_samples_per_case)
        train_eval = train
    else:
        train = test = train_eval = flatten_for_classification(dataset.cases)
    missing = set(split.train) | set(split.test)
    missing -= set(flatten_for_classification(dataset.cases).case_ids)
    if missing:
        raise DataError(f"split names cases the dataset does not include: {sorted(missing)[:3]}")
    return (train.select_cases(split.train), train_eval.select_cases(split.train),
            test.select_cases(split.test))


def _xy(kind, table):
    if isinstance(table, RegressionTable):
        return table.features, table.y_um
    return table.features, table.mode


def _fold_assignment(kind, table, folds, seed) -> np.ndarray:
    if isinstance(table, ClassificationTable):
        return stratified_kfold(table.mode, folds, seed)
    # whole cases go to one fold; cases are stratified by their mode
    ids, first = np.unique(table.case_ids, return_index=True)
    case_fold = stratified_kfold(table.case_modes[first], folds, seed)
    lookup = dict(zip(ids, case_fold))
    return np.array([lookup[c] for c in table.case_ids], dtype=int)


def score(model: TrainedModel, features, target) -> float:
    pred = model.predict(features)
    if model.is_regressor:
        return r2_score(target, pred)
    return float(np.mean(pred == target))


def tune(kind: str, table, cfg: TrainingConfig, grid: dict | None = None) -> GridResult:
    X, y = _xy(kind, table)
    fold_of = _fold_assignment(kind, table, cfg.folds, cfg.seed)

    def fit_score(params, tr, va):
        m = fit_model(kind, X[tr], y[tr], params, cfg.seed)
        return score(m, X[va], y[va])

    smallest = len(y) - int(np.bincount(fold_of).max())

    def admissible(params):
        return params.get("k", 1) <= smallest

    return grid_search(fit_score, grid if grid is not None else cfg.grid_for(kind), len(y),
                       fold_of, admissible)


def evaluate(model: TrainedModel, tables: dict) -> EvalReport:
    """Metrics of ``model`` on each named table (typically train and test)."""
    metrics, confusion, counts = {}, {}, {}
    for name, table in tables.items():
        X, y = _xy(model.kind, table)
        counts[name] = int(len(y))
        pred = model.predict(X)
        if model.is_regressor:
            metrics[name] = {"r2": r2_score(y, pred)}
        else:
            c = Confusion.from_labels(y, pred)
            confusion[name] = c
            metrics[name] = classification_metrics(c)
    return EvalReport(model.kind, model.hyperparameters, metrics, confusion,
                      counts=counts, info=dict(model.info))


def train_and_evaluate(kind: str, dataset: Dataset, split: SplitDataset,
                       cfg: TrainingConfig | None = None, params: dict | None = None):
    """Grid search (unless ``params`` is given), refit on the whole training
    partition, then score on train and test."""
    kind = check_kind(kind)
    cfg = cfg or TrainingConfig()
    train, train_eval, test = partition_tables(kind, dataset, split, cfg)
    if len(train) == 0 or len(test) == 0:
        raise DataError("empty training or test partition")
    result = None
    if params is None:
        result = tune(kind, train, cfg)
        params = result.best_params
    X, y = _xy(kind, train)
    model = fit_model(kind, X, y, params, cfg.seed)
    report = evaluate(model, {"train": train_eval, "test": test})
    report.cv = result
    return model, report


def write_report(report: EvalReport, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return path


def write_confusion_csv(report: EvalReport, path) -> Path:
    """Long-format confusion matrices: split,true_mode,predicted_mode,count."""
    if not report.confusion:
        raise ConfigurationError("regression reports carry no confusion matrix")
    names = ("zigzag", "bumped")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["split", "true_mode", "predicted_mode", "count"])
        for split_name, c in report.confusion.items():
            m = c.matrix()
            for i in range(2):
                for j in range(2):
                    w.writerow([split_name, names[i], names[j], int(m[i, j])])
    return path

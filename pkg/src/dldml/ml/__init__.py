"""Surrogate models for trajectories (regression) and transport modes (classification)."""

from .metrics import Confusion, classification_metrics, r2_score
from .models import (CLASSIFIERS, DEFAULT_GRIDS, KINDS, REGRESSORS, TrainedModel, fit_model,
                     load_model, predict_mode, predict_y, save_model)
from .pipeline import (EvalReport, TrainingConfig, evaluate, train_and_evaluate, tune,
                       write_confusion_csv, write_report)
from .scaling import FeatureScaler, apply_scaler, fit_scaler
from .selection import GridResult, expand_grid, grid_search, stratified_kfold

__all__ = [
    "CLASSIFIERS", "Confusion", "DEFAULT_GRIDS", "EvalReport", "FeatureScaler", "GridResult",
    "KINDS", "REGRESSORS", "TrainedModel", "TrainingConfig", "apply_scaler",
    "classification_metrics", "evaluate", "expand_grid", "fit_model", "fit_scaler",
    "grid_search", "load_model", "predict_mode", "predict_y", "r2_score", "save_model",
    "stratified_kfold", "train_and_evaluate", "tune", "write_confusion_csv", "write_report",
]

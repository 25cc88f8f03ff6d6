"""The five surrogate models behind one wrapper, with versioned JSON files.

Regressors map (x, size, N) to the lateral coordinate y. Classifiers map
(size, N) to the transport mode. Every model carries the min-max scaler
fitted on its own training rows.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError, DataError, ModelError, ParseError
from ..tracer import ModeLabel
from .knn import KnnClassifier, KnnRegressor
from .mlp import MlpNetwork, train_mlp
from .scaling import FeatureScaler
from .trees import GradientBoosting, RandomForest, Tree

MODEL_FORMAT = 1
REGRESSORS = ("knn_reg", "rf_reg", "gb_reg")
CLASSIFIERS = ("knn_clf", "mlp_clf")
KINDS = REGRESSORS + CLASSIFIERS

DEFAULT_GRIDS = {
    "knn_reg": {"k": [1, 3, 5, 7, 11, 15], "weighting": ["uniform", "distance"]},
    "rf_reg": {"n_trees": [50, 100, 200], "max_depth": [8, 16, None]},
    "gb_reg": {"n_stages": [100, 300], "learning_rate": [0.05, 0.1], "max_depth": [3]},
    "knn_clf": {"k": [1, 3, 5, 7, 11, 15], "weighting": ["uniform", "distance"]},
    "mlp_clf": {"layer_sizes": [[16, 16], [32, 32]], "activation": ["relu"],
                "learning_rate": [1e-2, 1e-3], "max_epochs": [500]},
}

DEFAULT_PARAMS = {
    "knn_reg": {"k": 5, "weighting": "uniform"},
    "rf_reg": {"n_trees": 100, "max_depth": None, "min_leaf": 5, "feature_subsample": 1.0},
    "gb_reg": {"n_stages": 100, "learning_rate": 0.1, "max_depth": 3},
    "knn_clf": {"k": 5, "weighting": "uniform"},
    "mlp_clf": {"layer_sizes": [16, 16], "activation": "relu", "learning_rate": 1e-2,
                "max_epochs": 500, "batch_size": 16, "patience": 25},
}


def check_kind(kind: str) -> str:
    if kind not in KINDS:
        raise ConfigurationError(f"unknown model kind {kind!r}; choose from {KINDS}")
    return kind


def resolve_params(kind: str, params: dict | None) -> dict:
    out = dict(DEFAULT_PARAMS[check_kind(kind)])
    for k, v in (params or {}).items():
        if k not in out:
            raise ConfigurationError(f"{kind} has no hyperparameter {k!r}")
        out[k] = v
    if "layer_sizes" in out:
        out["layer_sizes"] = [int(u) for u in out["layer_sizes"]]
    return out


@dataclass
class TrainedModel:
    kind: str
    hyperparameters: dict
    scaler: FeatureScaler
    state: object
    seed: int = 0
    info: dict = field(default_factory=dict)

    @property
    def is_regressor(self) -> bool:
        return self.kind in REGRESSORS

    def predict(self, features) -> np.ndarray:
        """Raw (unscaled) feature rows in, y in um or mode index out."""
        X = np.atleast_2d(np.asarray(features, dtype=float))
        return self.state.predict(self.scaler.transform(X))


def fit_model(kind: str, features, target, params: dict | None = None,
              seed: int = 0) -> TrainedModel:
    p = resolve_params(kind, params)
    X = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.asarray(target)
    if len(X) == 0:
        raise DataError("cannot train on an empty set")
    if len(X) != len(y):
        raise DataError("features and targets differ in length")
    scaler = FeatureScaler.fit(X)
    Xs = scaler.transform(X)
    info = {"n_train": int(len(X))}
    if kind == "knn_reg":
        state = KnnRegressor(Xs, y.astype(float), p["k"], p["weighting"])
    elif kind == "knn_clf":
        if len(np.unique(y)) < 2:
            raise DataError("classifier training needs both modes")
        state = KnnClassifier(Xs, y.astype(int), p["k"], p["weighting"])
    elif kind == "rf_reg":
        state = RandomForest.fit(Xs, y.astype(float), p["n_trees"], p["max_depth"],
                                 p["min_leaf"], p["feature_subsample"], seed)
    elif kind == "gb_reg":
        state = GradientBoosting.fit(Xs, y.astype(float), p["n_stages"], p["learning_rate"],
                                     p["max_depth"], seed=seed)
        info["stages_used"] = len(state.trees)
    else:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            state = train_mlp(Xs, y.astype(int), p["layer_sizes"], p["activation"],
                              p["learning_rate"], p["max_epochs"], p["batch_size"],
                              patience=p["patience"], seed=seed)
        for w in caught:
            warnings.warn(w.message, w.category, stacklevel=2)
        info.update(converged=state.converged, final_loss=state.final_loss,
                    epochs=state.epochs)
    return TrainedModel(kind, p, scaler, state, seed, info)


def _regression_features(x_um, size_um, n):
    x = np.atleast_1d(np.asarray(x_um, dtype=float))
    s = np.broadcast_to(np.asarray(size_um, dtype=float), x.shape)
    nn = np.broadcast_to(np.asarray(n, dtype=float), x.shape)
    return np.column_stack([x, s, nn])


def predict_y(model: TrainedModel, x_um, size_um, n) -> np.ndarray:
    """Lateral position (um) at streamwise position(s) ``x_um`` for one or many cases."""
    if not model.is_regressor:
        raise ModelError(f"{model.kind} is not a trajectory regressor")
    return model.predict(_regression_features(x_um, size_um, n))


def predict_mode(model: TrainedModel, size_um, n):
    """ModeLabel for scalar inputs, list of labels for arrays."""
    if model.is_regressor:
        raise ModelError(f"{model.kind} is not a mode classifier")
    s = np.atleast_1d(np.asarray(size_um, dtype=float))
    nn = np.broadcast_to(np.asarray(n, dtype=float), s.shape)
    idx = model.predict(np.column_stack([s, nn]))
    labels = [ModeLabel.BUMPED if i == 1 else ModeLabel.ZIGZAG for i in idx]
    return labels[0] if np.ndim(size_um) == 0 else labels


# --------------------------------------------------------------------------
# serialisation


def _matrix(a) -> dict:
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def _unmatrix(d) -> np.ndarray:
    return np.asarray(d["data"], dtype=float).reshape(d["shape"])


def _state_to_dict(model: TrainedModel) -> dict:
    s = model.state
    if model.kind in ("knn_reg", "knn_clf"):
        return {"X": _matrix(s.X), "y": s.y.tolist()}
    if model.kind == "rf_reg":
        return {"trees": [t.to_record() for t in s.trees]}
    if model.kind == "gb_reg":
        return {"init": s.init, "learning_rate": s.learning_rate,
                "losses": s.losses, "trees": [t.to_record() for t in s.trees]}
    return {"activation": s.activation,
            "layers": [{"weights": _matrix(W), "bias": b.tolist()}
                       for W, b in zip(s.weights, s.biases)]}


def _state_from_dict(kind: str, p: dict, d: dict):
    if kind == "knn_reg":
        return KnnRegressor(_unmatrix(d["X"]), np.asarray(d["y"], dtype=float),
                            p["k"], p["weighting"])
    if kind == "knn_clf":
        return KnnClassifier(_unmatrix(d["X"]), np.asarray(d["y"], dtype=int),
                             p["k"], p["weighting"])
    if kind == "rf_reg":
        return RandomForest([Tree.from_record(r) for r in d["trees"]])
    if kind == "gb_reg":
        return GradientBoosting(float(d["init"]), float(d["learning_rate"]),
                                [Tree.from_record(r) for r in d["trees"]], list(d["losses"]))
    layers = d["layers"]
    return MlpNetwork([_unmatrix(L["weights"]) for L in layers],
                      [np.asarray(L["bias"], dtype=float) for L in layers], d["activation"])


def model_to_dict(model: TrainedModel) -> dict:
    return {"format_version": MODEL_FORMAT, "kind": model.kind,
            "hyperparameters": model.hyperparameters, "seed": model.seed,
            "scaler": model.scaler.to_dict(), "info": model.info,
            "state": _state_to_dict(model)}


def model_from_dict(d: dict) -> TrainedModel:
    try:
        if d.get("format_version") != MODEL_FORMAT:
            raise ModelError(f"unsupported model format {d.get('format_version')!r}")
        kind = check_kind(d["kind"])
        p = resolve_params(kind, d["hyperparameters"])
        return TrainedModel(kind, p, FeatureScaler.from_dict(d["scaler"]),
                            _state_from_dict(kind, p, d["state"]), int(d["seed"]),
                            dict(d.get("info", {})))
    except (KeyError, TypeError, ValueError, DataError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelError(f"malformed model file: {exc}") from None


def save_model(model: TrainedModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model_to_dict(model), sort_keys=True) + "\n")
    return path


def load_model(path) -> TrainedModel:
    path = Path(path)
    if not path.exists():
        raise ModelError(f"no model file at {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path.name}: {exc.msg}", line=exc.lineno) from None
    return model_from_dict(data)

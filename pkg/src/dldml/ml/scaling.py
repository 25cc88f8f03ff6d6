from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError


@dataclass(frozen=True)
class FeatureScaler:
    """Per-feature min-max map fitted on training rows only.

    Values outside the training range land outside [0, 1]; nothing is
    clipped. A constant feature maps to 0.
    """

    minimum: tuple
    maximum: tuple

    @classmethod
    def fit(cls, features) -> "FeatureScaler":
        X = np.asarray(features, dtype=float)
        if X.ndim != 2 or len(X) == 0:
            raise DataError("scaler needs a non-empty 2-D feature array")
        return cls(tuple(map(float, X.min(axis=0))), tuple(map(float, X.max(axis=0))))

    def transform(self, features) -> np.ndarray:
        X = np.asarray(features, dtype=float)
        lo = np.array(self.minimum)
        span = np.array(self.maximum) - lo
        if X.shape[-1] != len(lo):
            raise DataError(f"expected {len(lo)} features, got {X.shape[-1]}")
        return (X - lo) / np.where(span > 0, span, 1.0)

    def to_dict(self) -> dict:
        return {"min": list(self.minimum), "max": list(self.maximum)}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureScaler":
        return cls(tuple(map(float, d["min"])), tuple(map(float, d["max"])))


def fit_scaler(features) -> FeatureScaler:
    return FeatureScaler.fit(features)


def apply_scaler(scaler: FeatureScaler, features) -> np.ndarray:
    return scaler.transform(features)

"""Classifier families sharing one train/predict contract over ordering-index labels."""
from __future__ import annotations

import numpy as np

from .base import (
    PARAM_TYPES,
    DTParams,
    HyperParams,
    KNNParams,
    MLPParams,
    SVMParams,
    TrainedModel,
    TrainingError,
    make_params,
)
from .knn import predict_knn, train_knn
from .mlp import predict_mlp, train_mlp
from .svm import predict_svm, train_svm
from .tree import predict_dt, train_dt

FAMILIES = ("dt", "knn", "mlp", "svm")

_TRAIN = {"knn": train_knn, "dt": train_dt, "mlp": train_mlp, "svm": train_svm}
_PREDICT = {"knn": predict_knn, "dt": predict_dt, "mlp": predict_mlp, "svm": predict_svm}


def train(X, y, hp: HyperParams, seed: int, n_classes: int) -> TrainedModel:
    return _TRAIN[hp.family](X, y, hp, seed=seed, n_classes=n_classes)


def predict(model: TrainedModel, rows) -> np.ndarray:
    """Ordering-index labels for rows already in the model's feature space."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[1] != model.n_features:
        raise ValueError(f"model expects {model.n_features} features, got rows of shape {rows.shape}")
    return _PREDICT[model.family](model, rows)


def predict_raw(model: TrainedModel, raw_rows) -> np.ndarray:
    """Like :func:`predict` but starting from unreduced, unscaled feature rows."""
    return predict(model, model.transform(raw_rows))


__all__ = [
    "FAMILIES", "PARAM_TYPES", "DTParams", "HyperParams", "KNNParams", "MLPParams", "SVMParams",
    "TrainedModel", "TrainingError", "make_params", "predict", "predict_raw", "train",
    "train_dt", "train_knn", "train_mlp", "train_svm",
]

from __future__ import annotations

import numpy as np

from .base import KNNParams, TrainedModel, check_training_data


def train_knn(X, y, hp: KNNParams, seed: int = 0, n_classes: int | None = None) -> TrainedModel:
    n_classes = int(np.max(y)) + 1 if n_classes is None else n_classes
    X, y = check_training_data(X, y, n_classes)
    if hp.k > X.shape[0]:
        raise ValueError(f"k={hp.k} exceeds the {X.shape[0]} training rows")
    return TrainedModel("knn", hp, {"X": X.copy(), "y": y.copy()}, n_classes, X.shape[1], seed)


def predict_knn(model: TrainedModel, rows: np.ndarray) -> np.ndarray:
    Xtr, ytr = model.theta["X"], model.theta["y"]
    hp: KNNParams = model.params
    out = np.empty(rows.shape[0], dtype=np.int64)
    for i, q in enumerate(rows):
        d = np.sqrt(((Xtr - q) ** 2).sum(axis=1))
        nearest = np.argsort(d, kind="stable")[: hp.k]
        dn = d[nearest]
        labels = ytr[nearest]
        if dn[0] == 0.0:
            # exact matches win outright; among several, majority then lowest class
            votes = np.bincount(labels[dn == 0.0], minlength=model.n_classes)
        elif hp.weighting == "distance":
            votes = np.bincount(labels, weights=1.0 / dn, minlength=model.n_classes)
        else:
            votes = np.bincount(labels, minlength=model.n_classes)
        out[i] = int(np.argmax(votes))
    return out

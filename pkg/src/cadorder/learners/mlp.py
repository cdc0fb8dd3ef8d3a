"""Single-hidden-layer perceptron trained by full-batch gradient descent."""
from __future__ import annotations

import numpy as np

from .base import MLPParams, TrainedModel, TrainingError, check_training_data

PARAM_NAMES = ("W1", "b1", "W2", "b2")


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "identity":
        return z
    if kind == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _act_grad(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    if kind == "identity":
        return np.ones_like(z)
    if kind == "tanh":
        return 1.0 - a * a
    return (z > 0).astype(float)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def init_params(n_in: int, hidden: int, n_out: int, seed: int, zeros: bool = False) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases.  ``zeros=True`` is a test hook."""
    if zeros:
        return {"W1": np.zeros((n_in, hidden)), "b1": np.zeros(hidden),
                "W2": np.zeros((hidden, n_out)), "b2": np.zeros(n_out)}
    rng = np.random.default_rng(seed)
    lim1 = np.sqrt(6.0 / (n_in + hidden))
    lim2 = np.sqrt(6.0 / (hidden + n_out))
    return {
        "W1": rng.uniform(-lim1, lim1, size=(n_in, hidden)),
        "b1": np.zeros(hidden),
        "W2": rng.uniform(-lim2, lim2, size=(hidden, n_out)),
        "b2": np.zeros(n_out),
    }


def forward(params: dict[str, np.ndarray], X: np.ndarray, activation: str):
    z1 = X @ params["W1"] + params["b1"]
    a1 = _act(z1, activation)
    probs = softmax(a1 @ params["W2"] + params["b2"])
    return z1, a1, probs


def loss_and_grad(params, X, y, n_classes: int, l2_alpha: float, activation: str):
    """Mean cross-entropy plus ``l2_alpha * (|W1|^2 + |W2|^2)`` and its exact gradient."""
    m = X.shape[0]
    z1, a1, probs = forward(params, X, activation)
    onehot = np.zeros((m, n_classes))
    onehot[np.arange(m), y] = 1.0
    picked = np.clip(probs[np.arange(m), y], 1e-300, None)
    loss = -np.mean(np.log(picked))
    loss += l2_alpha * (np.sum(params["W1"] ** 2) + np.sum(params["W2"] ** 2))
    dz2 = (probs - onehot) / m
    grads = {
        "W2": a1.T @ dz2 + 2.0 * l2_alpha * params["W2"],
        "b2": dz2.sum(axis=0),
    }
    dz1 = (dz2 @ params["W2"].T) * _act_grad(z1, a1, activation)
    grads["W1"] = X.T @ dz1 + 2.0 * l2_alpha * params["W1"]
    grads["b1"] = dz1.sum(axis=0)
    return float(loss), grads


def fit_mlp(X, y, hp: MLPParams, n_classes: int, seed: int, params=None):
    """Run gradient descent; returns final parameters and the per-epoch loss curve."""
    params = init_params(X.shape[1], hp.hidden_size, n_classes, seed) if params is None else {
        k: v.copy() for k, v in params.items()}
    losses = []
    for epoch in range(hp.max_epochs):
        with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported below
            loss, grads = loss_and_grad(params, X, y, n_classes, hp.l2_alpha, hp.activation)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise TrainingError(f"non-finite loss at epoch {epoch}; learning_rate={hp.learning_rate} is too large")
        losses.append(loss)
        for k in PARAM_NAMES:
            params[k] -= hp.learning_rate * grads[k]
    return params, losses


def train_mlp(X, y, hp: MLPParams, seed: int = 0, n_classes: int | None = None,
              zero_init: bool = False) -> TrainedModel:
    n_classes = int(np.max(y)) + 1 if n_classes is None else n_classes
    X, y = check_training_data(X, y, n_classes)
    start = init_params(X.shape[1], hp.hidden_size, n_classes, seed, zeros=zero_init)
    params, _ = fit_mlp(X, y, hp, n_classes, seed, params=start)
    return TrainedModel("mlp", hp, params, n_classes, X.shape[1], seed)


def predict_proba_mlp(model: TrainedModel, rows: np.ndarray) -> np.ndarray:
    return forward(model.theta, rows, model.params.activation)[2]


def predict_mlp(model: TrainedModel, rows: np.ndarray) -> np.ndarray:
    return np.argmax(predict_proba_mlp(model, rows), axis=1).astype(np.int64)

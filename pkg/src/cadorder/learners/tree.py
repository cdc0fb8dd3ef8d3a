"""Greedy axis-aligned binary classification trees (CART-style)."""
from __future__ import annotations

import numpy as np

from .base import DTParams, TrainedModel, check_training_data

# Gains within this margin of the incumbent do not displace it (keeps tie-breaks stable).
_GAIN_EPS = 1e-12


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=float)
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - np.sum(p * p))


def entropy(counts) -> float:
    """Shannon entropy in bits."""
    counts = np.asarray(counts, dtype=float)
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log2(p)))


def _impurity_rows(counts: np.ndarray, criterion: str) -> np.ndarray:
    """Impurity along the last axis of a (..., n_classes) count array."""
    n = counts.sum(axis=-1, keepdims=True)
    p = counts / np.where(n == 0, 1, n)
    if criterion == "gini":
        return 1.0 - np.sum(p * p, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(p > 0, np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -np.sum(p * logs, axis=-1)


def _best_split(X: np.ndarray, y: np.ndarray, n_classes: int, criterion: str):
    m, nf = X.shape
    if m < 2:
        return None, None
    total = np.bincount(y, minlength=n_classes).astype(float)
    parent = _impurity_rows(total, criterion)
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    # left[c, j] = class counts of the c+1 smallest rows along feature j
    left = np.cumsum(np.eye(n_classes)[y][order], axis=0)[:-1]
    right = total - left
    nl = np.arange(1, m, dtype=float)[:, None]
    gain = parent - (nl / m) * _impurity_rows(left, criterion) - ((m - nl) / m) * _impurity_rows(right, criterion)
    valid = xs[:-1] < xs[1:]  # a cut between positions c and c+1 needs distinct values
    gain = np.where(valid, gain, -np.inf)
    best = (_GAIN_EPS, None, None)
    pos = np.argmax(gain, axis=0)  # first maximum = lowest threshold
    for j in range(nf):  # lowest feature index wins unless beaten by more than eps
        g = gain[pos[j], j]
        if g > best[0] + _GAIN_EPS:
            c = pos[j]
            best = (float(g), j, float((xs[c, j] + xs[c + 1, j]) / 2.0))
    return best[1], best[2]


def train_dt(X, y, hp: DTParams, seed: int = 0, n_classes: int | None = None) -> TrainedModel:
    n_classes = int(np.max(y)) + 1 if n_classes is None else n_classes
    X, y = check_training_data(X, y, n_classes)
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx: np.ndarray) -> int:
        counts = np.bincount(y[idx], minlength=n_classes)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(int(np.argmax(counts)))  # majority, ties to lowest class
        return len(feature) - 1

    root = new_node(np.arange(X.shape[0]))
    stack = [(root, np.arange(X.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= hp.max_depth or np.all(y[idx] == y[idx[0]]):
            continue
        j, t = _best_split(X[idx], y[idx], n_classes, hp.criterion)
        if j is None:
            continue
        go_left = X[idx, j] <= t
        li, ri = idx[go_left], idx[~go_left]
        if li.size == 0 or ri.size == 0:  # midpoint rounded onto a neighbour value
            continue
        feature[node], threshold[node] = j, t
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # LIFO: the left child is expanded first
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    theta = {
        "feature": np.array(feature, dtype=np.int64),
        "threshold": np.array(threshold, dtype=float),
        "left": np.array(left, dtype=np.int64),
        "right": np.array(right, dtype=np.int64),
        "value": np.array(value, dtype=np.int64),
    }
    return TrainedModel("dt", hp, theta, n_classes, X.shape[1], seed)


def tree_depth(model: TrainedModel) -> int:
    left, right = model.theta["left"], model.theta["right"]
    depth, frontier = 0, [0]
    while True:
        nxt = [c for n in frontier for c in (left[n], right[n]) if c >= 0]
        if not nxt:
            return depth
        depth += 1
        frontier = nxt


def predict_dt(model: TrainedModel, rows: np.ndarray) -> np.ndarray:
    th = model.theta
    out = np.empty(rows.shape[0], dtype=np.int64)
    for i, x in enumerate(rows):
        node = 0
        while th["left"][node] >= 0:
            node = th["left"][node] if x[th["feature"][node]] <= th["threshold"][node] else th["right"][node]
        out[i] = th["value"][node]
    return out

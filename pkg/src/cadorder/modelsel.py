"""Grid-search cross-validation with an F1 objective or a recorded-runtime objective.

The runtime objective scores a hyperparameter combination by the mean
recorded CAD time of the orderings its out-of-fold models predict, so a
wrong prediction costs in proportion to how slow the chosen ordering is.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import LabeledDataset, TimingMatrix
from .learners import FAMILIES, HyperParams, TrainedModel, make_params, predict, train

OBJECTIVES = ("f1", "time")


class GridSearchError(RuntimeError):
    def __init__(self, h: int, g: int | None, cause: Exception):
        self.h, self.g = h, g
        where = f"h={h}, fold={g}" if g is not None else f"h={h}, refit"
        super().__init__(f"training failed at {where}: {cause}")


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic child seed, a pure function of the master seed and keys."""
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1)[0])


@dataclass
class FoldPartition:
    folds: list[list[str]]
    seed: int

    @property
    def G(self) -> int:
        return len(self.folds)


def make_folds(ids: Sequence[str], G: int, seed: int) -> FoldPartition:
    ids = list(ids)
    if G < 2:
        raise ValueError("need at least 2 folds")
    if G > len(ids):
        raise ValueError(f"cannot split {len(ids)} ids into {G} folds")
    perm = np.random.default_rng(seed).permutation(len(ids))
    folds: list[list[str]] = [[] for _ in range(G)]
    for r, i in enumerate(perm):
        folds[r % G].append(ids[i])
    return FoldPartition(folds, seed)


def f1_per_class(y_true, y_pred, classes) -> np.ndarray:
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    out = []
    for c in classes:
        tp = np.sum((y_pred == c) & (y_true == c))
        fp = np.sum((y_pred == c) & (y_true != c))
        fn = np.sum((y_pred != c) & (y_true == c))
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        out.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
    return np.array(out, dtype=float)


def f1_macro(y_true, y_pred, n_c: int | None = None, average: str = "macro") -> float:
    """F1 averaged over the classes present in ``y_true``.

    ``average="weighted"`` weights each class by its support instead.
    """
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred differ in length")
    if y_true.size == 0:
        raise ValueError("empty label arrays")
    classes, support = np.unique(y_true, return_counts=True)
    scores = f1_per_class(y_true, y_pred, classes)
    if average == "macro":
        return float(scores.mean())
    if average == "weighted":
        return float(np.sum(scores * support) / support.sum())
    raise ValueError(f"unknown average {average!r}")


def objective_f1(fold_preds: Sequence[np.ndarray], fold_labels: Sequence[np.ndarray],
                 pooled: bool = False, average: str = "macro") -> float:
    """Mean over folds of the fold F1 score (or one F1 over pooled predictions)."""
    if len(fold_preds) != len(fold_labels) or not fold_preds:
        raise ValueError("predictions must be given for every fold")
    if pooled:
        return f1_macro(np.concatenate(fold_labels), np.concatenate(fold_preds), average=average)
    return float(np.mean([f1_macro(t, p, average=average) for p, t in zip(fold_preds, fold_labels)]))


def fold_mean_time(pred: Sequence[int], ids: Sequence[str], timing: TimingMatrix) -> float:
    return float(np.mean([timing.time_of(pid, int(c)) for pid, c in zip(ids, pred)]))


def objective_time(fold_preds: Sequence[np.ndarray], fold_ids: Sequence[Sequence[str]],
                   timing: TimingMatrix) -> float:
    """Mean over folds of the negated mean recorded time of the predicted orderings."""
    if len(fold_preds) != len(fold_ids) or not fold_preds:
        raise ValueError("predictions must be given for every fold")
    return float(np.mean([-fold_mean_time(p, ids, timing) for p, ids in zip(fold_preds, fold_ids)]))


@dataclass
class HyperGrid:
    family: str
    combos: list[HyperParams]

    def __post_init__(self):
        if not self.combos:
            raise ValueError("empty hyperparameter grid")
        if len(set(self.combos)) != len(self.combos):
            raise ValueError("duplicate hyperparameter combinations")
        if any(c.family != self.family for c in self.combos):
            raise ValueError("grid mixes model families")

    @property
    def H(self) -> int:
        return len(self.combos)

    @classmethod
    def from_spec(cls, family: str, spec: dict[str, list]) -> HyperGrid:
        """Cross product of the listed values, earlier keys varying slowest."""
        keys = list(spec)
        combos = [make_params(family, **dict(zip(keys, vals))) for vals in product(*(spec[k] for k in keys))]
        return cls(family, combos)


def load_grids(path: str | Path) -> dict[str, HyperGrid]:
    spec = json.loads(Path(path).read_text(encoding="utf-8"))
    return grids_from_spec(spec)


def grids_from_spec(spec: dict) -> dict[str, HyperGrid]:
    out = {}
    for family, params in spec.items():
        if family not in FAMILIES:
            raise ValueError(f"unknown model family {family!r} in grid spec")
        out[family] = HyperGrid.from_spec(family, params)
    return out


def default_grids() -> dict[str, HyperGrid]:
    from importlib.resources import files

    return grids_from_spec(json.loads(files("cadorder").joinpath("default_grids.json").read_text()))


@dataclass
class CVResult:
    family: str
    objective: str
    grid: HyperGrid
    partition: FoldPartition
    fold_predictions: dict[tuple[int, int], np.ndarray]
    scores: list[float]
    h_opt: int
    model: TrainedModel
    f1_scores: list[float] = field(default_factory=list)
    time_scores: list[float] = field(default_factory=list)

    @property
    def best_params(self) -> HyperParams:
        return self.grid.combos[self.h_opt]


@dataclass
class FoldScores:
    """Out-of-fold predictions and both objective values for every combination."""
    family: str
    grid: HyperGrid
    partition: FoldPartition
    fold_predictions: dict[tuple[int, int], np.ndarray]
    f1_scores: list[float]
    time_scores: list[float]
    seed: int


def cross_validate(family: str, grid: HyperGrid, data: LabeledDataset, G: int = 3, seed: int = 0,
                   pooled_f1: bool = False, f1_average: str = "macro") -> FoldScores:
    """Train every (h, g) pair once and score it under both objectives."""
    if grid.family != family:
        raise ValueError(f"grid is for {grid.family!r}, not {family!r}")
    partition = make_folds(data.ids, G, seed)
    row_of = {pid: i for i, pid in enumerate(data.ids)}
    fold_rows = [np.array([row_of[pid] for pid in fold]) for fold in partition.folds]

    preds: dict[tuple[int, int], np.ndarray] = {}
    f1s, times = [], []
    for h, hp in enumerate(grid.combos):
        per_fold = []
        for g in range(G):
            held = fold_rows[g]
            fit_rows = np.concatenate([fold_rows[k] for k in range(G) if k != g])
            assert not set(held.tolist()) & set(fit_rows.tolist())
            try:
                model = train(data.X[fit_rows], data.y[fit_rows], hp, derive_seed(seed, 1, h, g), data.n_classes)
            except Exception as exc:
                raise GridSearchError(h, g, exc) from exc
            per_fold.append(predict(model, data.X[held]))
            preds[(h, g)] = per_fold[-1]
        labels = [data.y[r] for r in fold_rows]
        f1s.append(objective_f1(per_fold, labels, pooled=pooled_f1, average=f1_average))
        times.append(objective_time(per_fold, partition.folds, data.timing))
    return FoldScores(family, grid, partition, preds, f1s, times, seed)


def select_and_refit(cv: FoldScores, data: LabeledDataset, objective: str) -> CVResult:
    """Pick ``h_opt`` under ``objective`` (ties to the lowest h) and refit on all rows."""
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}")
    scores = cv.f1_scores if objective == "f1" else cv.time_scores
    h_opt = int(np.argmax(scores))  # first maximum = lowest h
    try:
        final = train(data.X, data.y, cv.grid.combos[h_opt], derive_seed(cv.seed, 2, h_opt), data.n_classes)
    except Exception as exc:
        raise GridSearchError(h_opt, None, exc) from exc
    return CVResult(cv.family, objective, cv.grid, cv.partition, cv.fold_predictions, list(scores), h_opt,
                    final, cv.f1_scores, cv.time_scores)


def grid_search(family: str, grid: HyperGrid, data: LabeledDataset, objective: str = "f1",
                G: int = 3, seed: int = 0, pooled_f1: bool = False, f1_average: str = "macro") -> CVResult:
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}")
    cv = cross_validate(family, grid, data, G, seed, pooled_f1, f1_average)
    return select_and_refit(cv, data, objective)

"""Selector scoring: window accuracy, total time, tie-aware heuristic scoring, baselines."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dataset import DEFAULT_WINDOW, TimingMatrix, label_targets, within_window


class CoverageError(ValueError):
    pass


def _check_coverage(predictions: Mapping[str, object], timing: TimingMatrix) -> None:
    # Extra predictions are ignored: the timing matrix defines the evaluated set.
    missing = [pid for pid in timing.ids if pid not in predictions]
    if missing:
        raise CoverageError(f"no prediction for {len(missing)} problem(s), e.g. {missing[:3]}")


def accuracy_within(predictions: Mapping[str, int], timing: TimingMatrix,
                    window: float = DEFAULT_WINDOW) -> float:
    _check_coverage(predictions, timing)
    best = timing.times.min(axis=1)
    chosen = np.array([timing.time_of(pid, int(predictions[pid])) for pid in timing.ids])
    return float(100.0 * np.mean(within_window(chosen, best, window)))


def total_time(predictions: Mapping[str, int], timing: TimingMatrix) -> float:
    _check_coverage(predictions, timing)
    return float(sum(timing.time_of(pid, int(predictions[pid])) for pid in timing.ids))


def tie_aware_metrics(prediction_sets: Mapping[str, Iterable[int]], timing: TimingMatrix,
                      window: float = DEFAULT_WINDOW) -> tuple[float, float]:
    """(accuracy %, total seconds) for selectors that may return several orderings.

    Accuracy per problem is the share of predicted orderings inside the target
    window; time per problem is the mean time over the predicted orderings.
    """
    _check_coverage(prediction_sets, timing)
    targets = label_targets(timing, window).target_sets
    acc, tot = [], 0.0
    for i, pid in enumerate(timing.ids):
        pred = sorted(set(int(c) for c in prediction_sets[pid]))
        if not pred:
            raise ValueError(f"empty prediction set for problem {pid!r}")
        acc.append(100.0 * len(targets[i].intersection(pred)) / len(pred))
        tot += float(np.mean([timing.time_of(pid, c) for c in pred]))
    return float(np.mean(acc)), tot


def virtual_best_worst(timing: TimingMatrix) -> tuple[float, float]:
    return float(timing.times.min(axis=1).sum()), float(timing.times.max(axis=1).sum())


def random_expectation(timing: TimingMatrix, window: float = DEFAULT_WINDOW) -> tuple[float, float]:
    """Exact expected (accuracy %, total seconds) of a uniformly random ordering."""
    targets = label_targets(timing, window).target_sets
    k = timing.n_orderings
    acc = float(np.mean([100.0 * len(t) / k for t in targets]))
    return acc, float(timing.times.mean(axis=1).sum())


@dataclass
class SelectorOutput:
    name: str
    kind: str  # "ml" or "heuristic"
    predictions: Mapping[str, Sequence[int]]  # problem id -> one or more ordering indices
    prediction_overhead_s: float | None = None


@dataclass
class MetricsReport:
    dataset: dict
    selectors: list[dict]
    meta: dict | None = None

    def to_dict(self) -> dict:
        out = {}
        if self.meta is not None:
            out["meta"] = self.meta
        out["dataset"] = self.dataset
        out["selectors"] = self.selectors
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def build_report(selectors: Sequence[SelectorOutput], timing: TimingMatrix,
                 window: float = DEFAULT_WINDOW, meta: dict | None = None) -> MetricsReport:
    if not selectors:
        raise ValueError("at least one selector is required")
    vb, vw = virtual_best_worst(timing)
    r_acc, r_time = random_expectation(timing, window)
    dataset = {
        "problems": len(timing.ids),
        "n": timing.n,
        "window": window,
        "virtual_best_s": vb,
        "virtual_worst_s": vw,
        "random": {"accuracy_percent": r_acc, "time_s": r_time},
    }
    entries = []
    for sel in selectors:
        try:
            acc, tot = tie_aware_metrics(sel.predictions, timing, window)
        except CoverageError as exc:
            raise CoverageError(f"selector {sel.name}: {exc}") from None
        entry = {"name": sel.name, "kind": sel.kind, "accuracy_percent": acc, "total_time_s": tot}
        if sel.prediction_overhead_s is not None:
            entry["prediction_overhead_s"] = sel.prediction_overhead_s
        entries.append(entry)
    return MetricsReport(dataset, entries, meta)

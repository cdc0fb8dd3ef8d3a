"""Timing matrices, the timeout protocol, target labels, splits and synthetic fixtures."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .polysys import Polynomial, ProblemInstance

log = logging.getLogger(__name__)

TIMING_COLUMNS = ("problem_id", "ordering_index", "time_s", "status", "phase", "limit_s")
TRAIN_INITIAL_LIMIT = 16.0
TRAIN_OBSERVED_MAX_LIMIT = 32.0
TEST_LIMIT = 64.0
DEFAULT_WINDOW = 0.2
# Relative slack on the inclusive window test; absorbs float rounding of (1 + w) * t.
_WINDOW_RTOL = 1e-12


class TimingError(ValueError):
    pass


def within_window(time_s, best_s, window: float = DEFAULT_WINDOW):
    """``time <= (1 + window) * best``, inclusive.  Shared by labeling and accuracy."""
    return np.asarray(time_s) <= (1.0 + window) * np.asarray(best_s) * (1.0 + _WINDOW_RTOL)


@dataclass
class TimingMatrix:
    ids: list[str]
    n: int
    times: np.ndarray  # (problems, n!) seconds
    timed_out: np.ndarray  # (problems, n!) bool
    limits: np.ndarray  # (problems,) cap of the run each row came from
    phases: list[str]

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.timed_out = np.asarray(self.timed_out, dtype=bool)
        self.limits = np.asarray(self.limits, dtype=float)
        k = math.factorial(self.n)
        if self.times.shape != (len(self.ids), k) or self.timed_out.shape != self.times.shape:
            raise TimingError(f"timing arrays must have shape ({len(self.ids)}, {k})")
        if len(set(self.ids)) != len(self.ids):
            raise TimingError("duplicate problem ids")
        if np.any(self.times <= 0) or not np.all(np.isfinite(self.times)):
            raise TimingError("times must be positive and finite")
        capped = np.where(self.timed_out, self.times == self.limits[:, None], True)
        if not np.all(capped):
            raise TimingError("timeout entries must carry the recorded limit")
        self._pos = {pid: i for i, pid in enumerate(self.ids)}

    @property
    def n_orderings(self) -> int:
        return self.times.shape[1]

    def index_of(self, pid: str) -> int:
        try:
            return self._pos[pid]
        except KeyError:
            raise KeyError(f"no timings for problem {pid!r}") from None

    def row(self, pid: str) -> np.ndarray:
        return self.times[self.index_of(pid)]

    def time_of(self, pid: str, ordering_index: int) -> float:
        if not 0 <= ordering_index < self.n_orderings:
            raise KeyError(f"ordering index {ordering_index} out of range for problem {pid!r}")
        return float(self.times[self.index_of(pid), ordering_index])

    def subset(self, ids: Sequence[str]) -> TimingMatrix:
        rows = [self.index_of(pid) for pid in ids]
        return TimingMatrix(list(ids), self.n, self.times[rows], self.timed_out[rows],
                            self.limits[rows], [self.phases[i] for i in rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TIMING_COLUMNS)
        for i, pid in enumerate(self.ids):
            for j in range(self.n_orderings):
                w.writerow([pid, j, repr(float(self.times[i, j])),
                            "timeout" if self.timed_out[i, j] else "ok",
                            self.phases[i], repr(float(self.limits[i]))])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def infer_n(path: str | Path) -> int:
    """Variable count implied by the largest ordering index in a timings CSV."""
    with open(path, encoding="utf-8", newline="") as fh:
        try:
            top = max(int(rec["ordering_index"]) for rec in csv.DictReader(fh))
        except (KeyError, ValueError, TypeError):
            raise TimingError(f"{path}: cannot infer the variable count") from None
    n = 2
    while math.factorial(n) < top + 1:
        n += 1
    return n


def load_timings(path: str | Path, n: int | None = None) -> TimingMatrix:
    """Read a timings CSV.  When a problem has runs at several limits the largest-limit run is used.

    ``n`` defaults to the smallest variable count whose ``n!`` covers every ordering index.
    """
    n = infer_n(path) if n is None else n
    k = math.factorial(n)
    runs: dict[tuple[str, float], dict[int, tuple[float, bool, str]]] = {}
    order: dict[str, None] = {}  # insertion-ordered set
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(TIMING_COLUMNS) - set(reader.fieldnames):
            raise TimingError(f"{path}: header must contain {', '.join(TIMING_COLUMNS)}")
        for lineno, rec in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            pid = rec["problem_id"]
            try:
                idx = int(rec["ordering_index"])
                limit = float(rec["limit_s"])
            except ValueError as exc:
                raise TimingError(f"{where}: {exc}") from None
            status = rec["status"].strip()
            phase = rec["phase"].strip()
            if status not in ("ok", "timeout"):
                raise TimingError(f"{where}: status must be ok or timeout, got {status!r}")
            if phase not in ("train", "test"):
                raise TimingError(f"{where}: phase must be train or test, got {phase!r}")
            if not 0 <= idx < k:
                raise TimingError(f"{where}: ordering_index {idx} outside 0..{k - 1}")
            if not limit > 0:
                raise TimingError(f"{where}: limit_s must be positive")
            raw = rec["time_s"].strip()
            if raw == "" and status == "timeout":
                time_s = limit  # censored value may be left blank
            else:
                try:
                    time_s = float(raw)
                except ValueError:
                    raise TimingError(f"{where}: bad time_s {raw!r}") from None
            if not (math.isfinite(time_s) and time_s > 0):
                raise TimingError(f"{where}: time_s must be positive, got {time_s}")
            if status == "timeout" and time_s != limit:
                raise TimingError(f"{where}: timeout recorded as {time_s}, expected the limit {limit}")
            if status == "ok" and time_s > limit:
                raise TimingError(f"{where}: ok time {time_s} exceeds limit {limit}")
            run = runs.setdefault((pid, limit), {})
            order.setdefault(pid)
            if idx in run:
                raise TimingError(f"{where}: duplicate entry for ({pid!r}, ordering {idx}, limit {limit})")
            run[idx] = (time_s, status == "timeout", phase)

    top_limit: dict[str, float] = {}
    for pid, lim in runs:
        top_limit[pid] = max(lim, top_limit.get(pid, lim))
    times, flags, limits, phases = [], [], [], []
    for pid in order:
        limit = top_limit[pid]
        run = runs[(pid, limit)]
        missing = [j for j in range(k) if j not in run]
        if missing:
            raise TimingError(f"problem {pid!r} (limit {limit}): missing ordering index {missing[0]}"
                              + (f" and {len(missing) - 1} more" if len(missing) > 1 else ""))
        row_phases = {run[j][2] for j in range(k)}
        if len(row_phases) != 1:
            raise TimingError(f"problem {pid!r}: mixed phases {sorted(row_phases)} in one run")
        times.append([run[j][0] for j in range(k)])
        flags.append([run[j][1] for j in range(k)])
        limits.append(limit)
        phases.append(row_phases.pop())
    return TimingMatrix(list(order), n, np.array(times).reshape(len(order), k),
                        np.array(flags, dtype=bool).reshape(len(order), k), np.array(limits), phases)


@dataclass(frozen=True)
class RerunAt:
    limit: float


def validate_training_censoring(row, initial_limit: float = TRAIN_INITIAL_LIMIT) -> RerunAt | None:
    """None if the row is usable; otherwise the doubled limit to rerun at.

    ``row`` is a sequence of statuses: ``"ok"``/``"timeout"`` strings or booleans
    meaning timed-out.
    """
    flags = [s == "timeout" if isinstance(s, str) else bool(s) for s in row]
    if not flags or not all(flags):
        return None
    new = 2.0 * initial_limit
    if new > TRAIN_OBSERVED_MAX_LIMIT:
        log.warning("rerun at %.0f s exceeds the %.0f s limit that sufficed for the reference data",
                    new, TRAIN_OBSERVED_MAX_LIMIT)
    return RerunAt(new)


@dataclass
class Labels:
    target_class: np.ndarray  # (problems,) int
    target_sets: list[frozenset[int]]
    best_time: np.ndarray


def label_targets(matrix: TimingMatrix, window: float = DEFAULT_WINDOW) -> Labels:
    times = matrix.times
    best = times.min(axis=1)
    cls = times.argmin(axis=1)  # first minimum = lowest ordering index
    mask = within_window(times, best[:, None], window)
    sets = [frozenset(np.flatnonzero(m).tolist()) for m in mask]
    return Labels(cls.astype(int), sets, best)


@dataclass
class LabeledDataset:
    ids: list[str]
    X: np.ndarray
    y: np.ndarray
    target_sets: list[frozenset[int]]
    timing: TimingMatrix
    n_classes: int

    def subset(self, rows: Sequence[int]) -> LabeledDataset:
        rows = list(rows)
        return LabeledDataset([self.ids[i] for i in rows], self.X[rows], self.y[rows],
                              [self.target_sets[i] for i in rows],
                              self.timing.subset([self.ids[i] for i in rows]), self.n_classes)


def make_labeled(ids: Sequence[str], X: np.ndarray, timing: TimingMatrix,
                 window: float = DEFAULT_WINDOW) -> LabeledDataset:
    t = timing.subset(ids)
    lab = label_targets(t, window)
    return LabeledDataset(list(ids), np.asarray(X, dtype=float), lab.target_class, lab.target_sets,
                          t, t.n_orderings)


@dataclass(frozen=True)
class SplitSpec:
    seed: int
    train: tuple[str, ...]
    test: tuple[str, ...]


def split_dataset(ids: Sequence[str], train_fraction: float, seed: int) -> SplitSpec:
    ids = list(ids)
    if len(ids) < 2:
        raise ValueError("need at least 2 ids to split")
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n_train = min(max(int(round(train_fraction * len(ids))), 1), len(ids) - 1)
    perm = np.random.default_rng(seed).permutation(len(ids))
    train = tuple(ids[i] for i in sorted(perm[:n_train]))
    test = tuple(ids[i] for i in sorted(perm[n_train:]))
    return SplitSpec(seed, train, test)


# -- synthetic fixture -------------------------------------------------------

@dataclass(frozen=True)
class FixtureSpec:
    clusters: int = 6
    problems_per_cluster: int = 20
    n: int = 3
    noise: float = 0.05
    trap_penalty: float = 20.0
    near_optimal: int = 2
    test_fraction: float = 0.25

    def validate(self) -> None:
        if self.clusters < 1 or self.problems_per_cluster < 1:
            raise ValueError("fixture needs at least one cluster and one problem per cluster")
        if self.n < 2:
            raise ValueError("fixture needs n >= 2")
        if not 0 <= self.noise < 0.5:
            raise ValueError("noise must be in [0, 0.5)")
        if self.trap_penalty < 1:
            raise ValueError("trap_penalty must be >= 1")
        if not 0 <= self.near_optimal <= math.factorial(self.n) - 2:
            raise ValueError("near_optimal must leave room for the fast and trap orderings")
        if not 0 <= self.test_fraction < 1:
            raise ValueError("test_fraction must be in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> FixtureSpec:
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown fixture spec keys {sorted(extra)}")
        return cls(**d)


_MIXED_TERM_DEGREE = 3


def _cluster_profiles(spec: FixtureSpec, rng: np.random.Generator) -> list[tuple[int, ...]]:
    """Distinct per-variable maximum degrees, one profile per cluster."""
    space = [p for p in np.ndindex(*([3] * spec.n))]
    picks = rng.permutation(len(space))
    profiles = [tuple(int(d) + 1 for d in space[i]) for i in picks[: spec.clusters]]
    while len(profiles) < spec.clusters:  # more clusters than distinct profiles
        profiles.append(profiles[len(profiles) % len(space)])
    return profiles


def _random_problem(pid: str, names: Sequence[str], profile: Sequence[int],
                    rng: np.random.Generator) -> ProblemInstance:
    n = len(names)
    polys = []
    for _ in range(int(rng.integers(1, 3))):
        terms: dict[tuple[int, ...], int] = {}
        for _ in range(int(rng.integers(2, 4))):
            exps = [int(rng.integers(0, d + 1)) for d in profile]
            while sum(exps) > _MIXED_TERM_DEGREE:  # keeps projection sets (and sotd) cheap
                exps[int(rng.choice(np.flatnonzero(exps)))] -= 1
            terms[tuple(exps)] = terms.get(tuple(exps), 0) + int(rng.choice([-3, -2, -1, 1, 2, 3]))
        polys.append(terms)
    # every variable reaches its profile degree somewhere, alone in a pure power
    for v, d in enumerate(profile):
        exps = [0] * n
        exps[v] = d
        j = int(rng.integers(0, len(polys)))
        polys[j][tuple(exps)] = int(rng.choice([1, 2]))
    return ProblemInstance(pid, tuple(names), tuple(Polynomial(t, n) for t in polys))


def synth_fixture(spec: FixtureSpec, seed: int) -> tuple[list[ProblemInstance], TimingMatrix]:
    """Clustered problems with planted fast, near-optimal and trap orderings.

    Within a cluster every row has a fast ordering at base time ``t``, the
    cluster's near-optimal orderings at up to ``1.15 t``, and a trap ordering
    at ``trap_penalty`` times the row minimum or more.  A cluster's trap is the
    next cluster's fast ordering, so confusing neighbouring clusters is costly.
    Per-entry multiplicative noise can swap the fast and near-optimal orderings.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    k = math.factorial(spec.n)
    names = [f"x{i + 1}" for i in range(spec.n)]
    profiles = _cluster_profiles(spec, rng)
    fast = [int(rng.integers(0, k)) for _ in range(spec.clusters)]
    traps = [fast[(c + 1) % spec.clusters] for c in range(spec.clusters)]
    for c in range(spec.clusters):
        if traps[c] == fast[c]:
            traps[c] = (fast[c] + 1) % k
    near: list[list[int]] = []
    for c in range(spec.clusters):
        others = [o for o in range(k) if o not in (fast[c], traps[c])]
        near.append(sorted(int(o) for o in rng.choice(others, size=spec.near_optimal, replace=False)))
    base_scale = rng.uniform(0.02, 0.35, size=spec.clusters)

    problems: list[ProblemInstance] = []
    times = []
    width = len(str(spec.clusters * spec.problems_per_cluster))
    counter = 0
    for c in range(spec.clusters):
        for _ in range(spec.problems_per_cluster):
            pid = f"p{counter:0{width}d}"
            counter += 1
            problems.append(_random_problem(pid, names, profiles[c], rng))
            t = base_scale[c] * float(np.exp(rng.uniform(-0.3, 0.3)))
            row = t * rng.uniform(1.5, 8.0, size=k)
            row[fast[c]] = t
            for o in near[c]:
                row[o] = t * rng.uniform(1.0, 1.15)
            row *= 1.0 + spec.noise * rng.uniform(-1.0, 1.0, size=k)
            row[traps[c]] = spec.trap_penalty * row.min() * rng.uniform(1.0, 1.5)
            times.append(row)

    times = np.array(times)
    n_prob = len(problems)
    n_test = int(round(spec.test_fraction * n_prob))
    test_rows = set(rng.permutation(n_prob)[:n_test].tolist())
    phases = ["test" if i in test_rows else "train" for i in range(n_prob)]
    limits = np.array([TEST_LIMIT if ph == "test" else TRAIN_INITIAL_LIMIT for ph in phases])
    # Apply the timeout protocol: training rows that time out everywhere are rerun at doubled limits.
    timed_out = times > limits[:, None]
    for i in range(n_prob):
        while phases[i] == "train":
            rerun = validate_training_censoring(timed_out[i], limits[i])
            if rerun is None:
                break
            limits[i] = rerun.limit
            timed_out[i] = times[i] > limits[i]
    times = np.where(timed_out, limits[:, None], times)
    matrix = TimingMatrix([p.id for p in problems], spec.n, times, timed_out, limits, phases)
    return problems, matrix

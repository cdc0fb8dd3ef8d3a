"""Feature generation from polynomial systems, plus column reduction and scaling.

Each feature is a composition: a per-monomial base measure for one variable,
optionally passed through ``sign``, aggregated over a polynomial's monomials,
optionally signed, aggregated over the system's polynomials, optionally signed.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Sequence

import numpy as np

from .polysys import ProblemInstance

BASE_MEASURES = ("var_degree", "masked_total_degree")
AGGREGATES = ("max", "sum", "average")


@dataclass(frozen=True)
class FeatureDef:
    variable: int
    base_measure: str
    sign_after_base: bool
    poly_aggregate: str
    sign_after_poly: bool
    system_aggregate: str
    sign_after_system: bool

    @property
    def name(self) -> str:
        base = "deg" if self.base_measure == "var_degree" else "mtdeg"
        s = f"{base}(v{self.variable})"
        if self.sign_after_base:
            s = f"sgn({s})"
        s = f"{self.poly_aggregate}_m({s})"
        if self.sign_after_poly:
            s = f"sgn({s})"
        s = f"{self.system_aggregate}_p({s})"
        if self.sign_after_system:
            s = f"sgn({s})"
        return s


def enumerate_feature_defs(n: int) -> list[FeatureDef]:
    if n < 1:
        raise ValueError("need at least one variable")
    bools = (False, True)
    return [
        FeatureDef(v, base, s1, pagg, s2, sagg, s3)
        for v, base, s1, pagg, s2, sagg, s3 in product(
            range(n), BASE_MEASURES, bools, AGGREGATES, bools, AGGREGATES, bools
        )
    ]


def _aggregate(values: np.ndarray, how: str, axis: int) -> np.ndarray:
    # values is padded with NaN where a polynomial/monomial is absent
    count = np.sum(~np.isnan(values), axis=axis)
    filled = np.nan_to_num(values, nan=0.0)
    if how == "sum":
        return filled.sum(axis=axis)
    if how == "max":
        # all measures are >= 0, so padding with 0 leaves max intact and makes empty sets 0
        return filled.max(axis=axis) if values.shape[axis] else np.zeros(np.delete(values.shape, axis))
    if how == "average":
        with np.errstate(invalid="ignore", divide="ignore"):
            out = filled.sum(axis=axis) / count
        return np.where(count > 0, out, 0.0)
    raise ValueError(f"unknown aggregate {how!r}")


def _base_tensor(problem: ProblemInstance) -> np.ndarray:
    """Array [measure, variable, poly, monomial] of base values, NaN-padded."""
    n = problem.n
    polys = [p for p in problem.polys if len(p)]  # the zero polynomial contributes nothing
    width = max((len(p) for p in polys), default=0)
    out = np.full((2, n, len(polys), width), np.nan)
    for j, p in enumerate(polys):
        exps = np.array([e for e, _ in p.items()], dtype=float)  # (terms, n)
        total = exps.sum(axis=1)
        out[0, :, j, : len(p)] = exps.T
        out[1, :, j, : len(p)] = (total[:, None] * (exps > 0)).T
    return out


def compute_features(problem: ProblemInstance, defs: Sequence[FeatureDef]) -> np.ndarray:
    n = problem.n
    if any(d.variable >= n for d in defs):
        raise ValueError(f"feature definitions reference variables beyond n={n}")
    base = _base_tensor(problem)
    cache: dict[tuple, np.ndarray] = {}

    def poly_level(mi: int, s1: bool, pagg: str, s2: bool) -> np.ndarray:
        key = (mi, s1, pagg, s2)
        if key not in cache:
            vals = base[mi]
            if s1:
                vals = np.sign(vals)
            agg = _aggregate(vals, pagg, axis=2) if vals.shape[2] else np.zeros(vals.shape[:2])
            if s2:
                agg = np.sign(agg)
            cache[key] = agg  # (n, polys)
        return cache[key]

    row = np.empty(len(defs))
    for i, d in enumerate(defs):
        mi = BASE_MEASURES.index(d.base_measure)
        per_poly = poly_level(mi, d.sign_after_base, d.poly_aggregate, d.sign_after_poly)[d.variable]
        val = _aggregate(per_poly[None, :], d.system_aggregate, axis=1)[0] if per_poly.size else 0.0
        row[i] = np.sign(val) if d.sign_after_system else val
    return row


@dataclass
class FeatureMatrix:
    ids: list[str]
    columns: list[str]
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.ids), len(self.columns)):
            raise ValueError(
                f"values shape {self.values.shape} does not match {len(self.ids)} ids x {len(self.columns)} columns"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature matrix contains non-finite values")

    def rows_for(self, ids: Sequence[str]) -> FeatureMatrix:
        pos = {pid: i for i, pid in enumerate(self.ids)}
        missing = [pid for pid in ids if pid not in pos]
        if missing:
            raise KeyError(f"no feature row for {missing[:5]}")
        return FeatureMatrix(list(ids), list(self.columns), self.values[[pos[p] for p in ids]])

    def to_csv(self, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["problem_id", *self.columns])
        for pid, row in zip(self.ids, self.values):
            w.writerow([pid, *(repr(float(x)) for x in row)])
        return buf.getvalue()

    def write_csv(self, path: str | Path, header_comment: str | None = None) -> None:
        Path(path).write_text(self.to_csv(header_comment), encoding="utf-8")

    @classmethod
    def read_csv(cls, path: str | Path) -> FeatureMatrix:
        with open(path, encoding="utf-8", newline="") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
        reader = csv.reader(lines)
        header = next(reader, None)
        if not header or header[0] != "problem_id":
            raise ValueError(f"{path}: missing problem_id header")
        ids, rows = [], []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise ValueError(f"{path}: row {lineno} has {len(rec)} fields, expected {len(header)}")
            ids.append(rec[0])
            rows.append([float(x) for x in rec[1:]])
        values = np.array(rows, dtype=float).reshape(len(ids), len(header) - 1)
        return cls(ids, header[1:], values)


def featurize(problems: Sequence[ProblemInstance], n: int | None = None) -> FeatureMatrix:
    if not problems:
        raise ValueError("no problems to featurize")
    n = problems[0].n if n is None else n
    bad = [p.id for p in problems if p.n != n]
    if bad:
        raise ValueError(f"problems with a variable count other than {n}: {bad[:5]}")
    defs = enumerate_feature_defs(n)
    values = np.array([compute_features(p, defs) for p in problems])
    return FeatureMatrix([p.id for p in problems], [d.name for d in defs], values)


@dataclass
class Reducer:
    """Which raw columns survive: constants dropped, exact duplicates merged."""

    n_input: int
    kept_columns: list[int]
    merged_groups: dict[int, list[int]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_input": self.n_input,
            "kept_columns": list(self.kept_columns),
            "merged_groups": {str(k): v for k, v in sorted(self.merged_groups.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> Reducer:
        return cls(int(d["n_input"]), [int(i) for i in d["kept_columns"]],
                   {int(k): [int(i) for i in v] for k, v in d["merged_groups"].items()})


def fit_reducer(train: FeatureMatrix | np.ndarray) -> Reducer:
    X = train.values if isinstance(train, FeatureMatrix) else np.asarray(train, dtype=float)
    if X.shape[0] < 2:
        raise ValueError("fit_reducer needs at least 2 training rows")
    kept: list[int] = []
    merged: dict[int, list[int]] = {}
    seen: dict[bytes, int] = {}
    for j in range(X.shape[1]):
        col = X[:, j]
        if np.all(col == col[0]):
            continue
        key = np.ascontiguousarray(col + 0.0).tobytes()  # +0.0 folds -0.0 into 0.0
        if key in seen:
            merged.setdefault(seen[key], []).append(j)
            continue
        seen[key] = j
        kept.append(j)
    if not kept:
        raise ValueError("every feature column is constant on the training data")
    return Reducer(X.shape[1], kept, merged)


def apply_reducer(reducer: Reducer, rows: FeatureMatrix | np.ndarray):
    X = rows.values if isinstance(rows, FeatureMatrix) else np.asarray(rows, dtype=float)
    if X.ndim != 2 or X.shape[1] != reducer.n_input:
        raise ValueError(f"expected {reducer.n_input} columns, got shape {X.shape}")
    out = X[:, reducer.kept_columns]
    if isinstance(rows, FeatureMatrix):
        return FeatureMatrix(list(rows.ids), [rows.columns[j] for j in reducer.kept_columns], out)
    return out


@dataclass
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": [repr(float(x)) for x in self.mean], "std": [repr(float(x)) for x in self.std]}

    @classmethod
    def from_dict(cls, d: dict) -> Scaler:
        return cls(np.array([float(x) for x in d["mean"]]), np.array([float(x) for x in d["std"]]))


def fit_scaler(train: FeatureMatrix | np.ndarray) -> Scaler:
    X = train.values if isinstance(train, FeatureMatrix) else np.asarray(train, dtype=float)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    zero = np.flatnonzero(std == 0)
    if zero.size:
        raise ValueError(f"zero-deviation columns {zero.tolist()}; apply the reducer first")
    return Scaler(mean, std)


def apply_scaler(scaler: Scaler, rows: FeatureMatrix | np.ndarray):
    X = rows.values if isinstance(rows, FeatureMatrix) else np.asarray(rows, dtype=float)
    if X.ndim != 2 or X.shape[1] != scaler.mean.shape[0]:
        raise ValueError(f"expected {scaler.mean.shape[0]} columns, got shape {X.shape}")
    out = (X - scaler.mean) / scaler.std
    if isinstance(rows, FeatureMatrix):
        return FeatureMatrix(list(rows.ids), list(rows.columns), out)
    return out

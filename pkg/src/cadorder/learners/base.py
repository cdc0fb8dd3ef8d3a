"""Hyperparameter records, the fitted-model container and its JSON form."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, ClassVar

import numpy as np

from ..featgen import Reducer, Scaler, apply_reducer, apply_scaler

MODEL_FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class KNNParams:
    family: ClassVar[str] = "knn"
    k: int = 5
    weighting: str = "distance"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.weighting not in ("distance", "uniform"):
            raise ValueError(f"unknown weighting {self.weighting!r}")


@dataclass(frozen=True)
class DTParams:
    family: ClassVar[str] = "dt"
    criterion: str = "gini"
    max_depth: int = 5

    def __post_init__(self):
        if self.criterion not in ("gini", "entropy"):
            raise ValueError(f"unknown criterion {self.criterion!r}")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")


@dataclass(frozen=True)
class MLPParams:
    family: ClassVar[str] = "mlp"
    hidden_size: int = 10
    activation: str = "tanh"
    l2_alpha: float = 1e-4
    learning_rate: float = 0.1
    max_epochs: int = 300

    def __post_init__(self):
        if self.hidden_size < 1:
            raise ValueError("hidden_size must be >= 1")
        if self.activation not in ("identity", "tanh", "relu"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.l2_alpha < 0:
            raise ValueError("l2_alpha must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")


@dataclass(frozen=True)
class SVMParams:
    family: ClassVar[str] = "svm"
    C: float = 1.0
    gamma: float = 0.1
    tolerance: float = 1e-3
    max_passes: int = 5

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be > 0")
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        if self.max_passes < 1:
            raise ValueError("max_passes must be >= 1")


PARAM_TYPES = {cls.family: cls for cls in (KNNParams, DTParams, MLPParams, SVMParams)}
HyperParams = KNNParams | DTParams | MLPParams | SVMParams


def make_params(family: str, **settings) -> HyperParams:
    try:
        cls = PARAM_TYPES[family]
    except KeyError:
        raise ValueError(f"unknown model family {family!r}") from None
    allowed = {f.name for f in fields(cls)}
    unknown = set(settings) - allowed
    if unknown:
        raise ValueError(f"unknown {family} hyperparameters {sorted(unknown)}")
    return cls(**settings)


@dataclass
class TrainedModel:
    family: str
    params: HyperParams
    theta: dict[str, np.ndarray]
    n_classes: int
    n_features: int
    seed: int
    reducer: Reducer | None = None
    scaler: Scaler | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def transform(self, raw: np.ndarray) -> np.ndarray:
        """Map raw feature rows through the model's reducer and scaler."""
        X = np.asarray(raw, dtype=float)
        if self.reducer is not None:
            X = apply_reducer(self.reducer, X)
        if self.scaler is not None:
            X = apply_scaler(self.scaler, X)
        return X

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        theta = {}
        for name, arr in self.theta.items():
            arr = np.asarray(arr)
            kind = "int" if np.issubdtype(arr.dtype, np.integer) else "float"
            flat = [str(int(x)) for x in arr.ravel()] if kind == "int" else [repr(float(x)) for x in arr.ravel()]
            theta[name] = {"dtype": kind, "shape": list(arr.shape), "data": flat}
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "family": self.family,
            "hyperparams": {k: _num_to_str(v) for k, v in asdict(self.params).items()},
            "theta": theta,
            "reducer": self.reducer.to_dict() if self.reducer is not None else None,
            "scaler": self.scaler.to_dict() if self.scaler is not None else None,
            "n_c": self.n_classes,
            "n_features": self.n_features,
            "seed": self.seed,
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":")) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def from_dict(cls, d: dict) -> TrainedModel:
        if d.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format_version {d.get('format_version')!r}")
        family = d["family"]
        ptype = PARAM_TYPES[family]
        types = {f.name: f.type for f in fields(ptype)}
        settings = {k: _str_to_num(v, types[k]) for k, v in d["hyperparams"].items()}
        theta = {}
        for name, blob in d["theta"].items():
            conv = int if blob["dtype"] == "int" else float
            arr = np.array([conv(x) for x in blob["data"]], dtype=np.int64 if conv is int else float)
            theta[name] = arr.reshape(blob["shape"])
        return cls(
            family=family,
            params=ptype(**settings),
            theta=theta,
            n_classes=int(d["n_c"]),
            n_features=int(d["n_features"]),
            seed=int(d["seed"]),
            reducer=Reducer.from_dict(d["reducer"]) if d.get("reducer") else None,
            scaler=Scaler.from_dict(d["scaler"]) if d.get("scaler") else None,
            meta=d.get("meta", {}),
        )

    @classmethod
    def load(cls, path: str | Path) -> TrainedModel:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _num_to_str(v):
    if isinstance(v, bool) or isinstance(v, str):
        return v
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    return v


def _str_to_num(v, typ):
    if typ in ("int", int):
        return int(v)
    if typ in ("float", float):
        return float(v)
    return v


def check_training_data(X, y, n_classes: int) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a nonempty 2-D array")
    if y.shape != (X.shape[0],):
        raise ValueError("y must have one label per row")
    y = y.astype(np.int64)
    if np.any(y < 0) or np.any(y >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes - 1}]")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains non-finite values")
    return X, y

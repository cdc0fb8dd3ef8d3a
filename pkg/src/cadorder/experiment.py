"""End-to-end experiment driver and the on-disk artifact formats it shares with the CLI."""
from __future__ import annotations

import hashlib
import json
import logging
import shutil
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from . import __version__
from .dataset import DEFAULT_WINDOW, TimingMatrix, load_timings, make_labeled, split_dataset
from .evalmetrics import MetricsReport, SelectorOutput, build_report
from .featgen import apply_reducer, apply_scaler, featurize, fit_reducer, fit_scaler
from .heuristics import HeuristicPrediction, brown_orderings, ordering_from_index, sotd_orderings
from .learners import FAMILIES, TrainedModel, predict
from .modelsel import OBJECTIVES, cross_validate, default_grids, load_grids, select_and_refit
from .polysys import ProblemInstance, parse_problem_file

log = logging.getLogger(__name__)

PREDICTION_FORMAT_VERSION = 1
OBJECTIVE_SUFFIX = {"f1": "O", "time": "N"}
HEURISTICS = {"brown": brown_orderings, "sotd": sotd_orderings}


class ConfigError(ValueError):
    pass


class ExperimentError(RuntimeError):
    def __init__(self, stage: str, message: str, ids: Sequence[str] = ()):
        self.stage = stage
        self.ids = list(ids)
        suffix = f" (ids: {', '.join(self.ids[:5])})" if self.ids else ""
        super().__init__(f"[{stage}] {message}{suffix}")


def selector_name(family: str, objective: str) -> str:
    return f"{family.upper()}-{OBJECTIVE_SUFFIX[objective]}"


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def config_hash(payload: Mapping) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def artifact_meta(cfg_hash: str, seed: int | None, window: float | None = None) -> dict:
    meta = {"tool": "cadorder", "version": __version__, "config_hash": cfg_hash, "seed": seed}
    if window is not None:
        meta["window"] = window
    return meta


# -- prediction files --------------------------------------------------------

def prediction_record(pid: str, indices: Sequence[int], n: int, variables: Sequence[str] | None = None,
                      scores: Mapping[int, int] | None = None) -> dict:
    rec = {"id": pid, "orderings": [int(i) for i in indices]}
    seqs = [ordering_from_index(int(i), n) for i in indices]
    rec["sequences"] = [[variables[v] for v in s] for s in seqs] if variables else [list(s) for s in seqs]
    if scores is not None:
        rec["scores"] = {str(k): int(v) for k, v in sorted(scores.items())}
    return rec


def write_predictions(path: str | Path, name: str, kind: str, n: int, records: Sequence[dict],
                      meta: dict, overhead_s: float | None = None) -> None:
    doc = {"format_version": PREDICTION_FORMAT_VERSION, "meta": meta,
           "selector": {"name": name, "kind": kind}, "n": n, "predictions": list(records)}
    if overhead_s is not None:
        doc["selector"]["prediction_overhead_s"] = overhead_s
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def read_predictions(path: str | Path) -> SelectorOutput:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format_version") != PREDICTION_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported prediction format_version {doc.get('format_version')!r}")
    preds: dict[str, list[int]] = {}
    for rec in doc["predictions"]:
        if rec["id"] in preds:
            raise ValueError(f"{path}: duplicate prediction for {rec['id']!r}")
        if not rec["orderings"]:
            raise ValueError(f"{path}: empty prediction set for {rec['id']!r}")
        preds[rec["id"]] = [int(i) for i in rec["orderings"]]
    sel = doc["selector"]
    return SelectorOutput(sel["name"], sel["kind"], preds, sel.get("prediction_overhead_s"))


def heuristic_records(problems: Sequence[ProblemInstance], method: str) -> tuple[list[dict], float]:
    fn = HEURISTICS[method]
    start = time.perf_counter()
    out = []
    for prob in problems:
        pred: HeuristicPrediction = fn(prob)
        out.append(prediction_record(prob.id, pred.indices, prob.n, prob.variables, pred.scores))
    return out, time.perf_counter() - start


# -- experiment --------------------------------------------------------------

@dataclass
class ExperimentConfig:
    problems: str
    timings: str
    output_dir: str
    grids: str | None = None
    G: int = 3
    seed: int = 0
    window: float = DEFAULT_WINDOW
    objectives: list[str] = field(default_factory=lambda: list(OBJECTIVES))
    families: list[str] = field(default_factory=lambda: list(FAMILIES))
    heuristics: list[str] = field(default_factory=lambda: ["brown", "sotd"])
    split: str = "phase"  # "phase": use the timings phase column; "random": split_dataset
    train_fraction: float = 0.75
    measure_overhead: bool = False

    @classmethod
    def from_dict(cls, d: Mapping, base_dir: str | Path | None = None) -> ExperimentConfig:
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        cfg = cls(**d)
        if base_dir is not None:  # resolve relative paths against the config file
            for key in ("problems", "timings", "output_dir", "grids"):
                val = getattr(cfg, key)
                if val is not None and not Path(val).is_absolute():
                    setattr(cfg, key, str(Path(base_dir) / val))
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(d, base_dir=Path(path).parent)

    def validate(self) -> None:
        for key in ("problems", "timings") + (("grids",) if self.grids else ()):
            if not Path(getattr(self, key)).is_file():
                raise ConfigError(f"{key} path does not exist: {getattr(self, key)}")
        if self.G < 2:
            raise ConfigError("G must be >= 2")
        if not 0 <= self.window:
            raise ConfigError("window must be non-negative")
        bad = [o for o in self.objectives if o not in OBJECTIVES]
        if bad:
            raise ConfigError(f"unknown objectives {bad}")
        bad = [f for f in self.families if f not in FAMILIES]
        if bad:
            raise ConfigError(f"unknown families {bad}")
        bad = [h for h in self.heuristics if h not in HEURISTICS]
        if bad:
            raise ConfigError(f"unknown heuristics {bad}")
        if self.split not in ("phase", "random"):
            raise ConfigError("split must be 'phase' or 'random'")

    def fingerprint(self) -> str:
        """Hash of all settings plus input file contents; output location excluded."""
        d = asdict(self)
        d.pop("output_dir")
        for key in ("problems", "timings", "grids"):
            if d[key] is not None:
                d[key] = file_digest(d[key])
        return config_hash(d)


def _split_ids(cfg: ExperimentConfig, ids: list[str], timing: TimingMatrix) -> tuple[list[str], list[str]]:
    if cfg.split == "phase":
        phase = dict(zip(timing.ids, timing.phases))
        train = [pid for pid in ids if phase[pid] == "train"]
        test = [pid for pid in ids if phase[pid] == "test"]
        if not train or not test:
            raise ExperimentError("split", "phase split needs both train and test rows; use split='random'")
        return train, test
    spec = split_dataset(ids, cfg.train_fraction, cfg.seed)
    return list(spec.train), list(spec.test)


def run_experiment(cfg: ExperimentConfig) -> MetricsReport:
    """Featurize, split, cross-validate every family under every objective, evaluate, write artifacts.

    Artifacts are staged in a temporary directory and moved into
    ``cfg.output_dir`` only once the report is complete.
    """
    cfg.validate()
    cfg_hash = cfg.fingerprint()
    meta = artifact_meta(cfg_hash, cfg.seed, cfg.window)
    out_dir = Path(cfg.output_dir)
    if out_dir.exists() and any(out_dir.iterdir()) and not (out_dir / "report.json").is_file():
        raise ConfigError(f"output_dir {out_dir} is not empty and holds no previous report; refusing to replace it")
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    stage_dir = Path(tempfile.mkdtemp(prefix=".staging-", dir=out_dir.parent))
    stage = "parse"
    try:
        problems = parse_problem_file(cfg.problems)
        if not problems:
            raise ExperimentError(stage, "problem file is empty")
        n = problems[0].n
        odd = [p.id for p in problems if p.n != n]
        if odd:
            raise ExperimentError(stage, f"all problems must have {n} variables", odd)

        stage = "timings"
        timing = load_timings(cfg.timings, n)
        known = set(timing.ids)
        missing = [p.id for p in problems if p.id not in known]
        if missing:
            raise ExperimentError(stage, "problems without timings", missing)
        ids = [p.id for p in problems]
        by_id = {p.id: p for p in problems}

        stage = "featurize"
        raw = featurize(problems, n)
        raw.write_csv(stage_dir / "features.csv", header_comment=json.dumps(meta, sort_keys=True))

        stage = "split"
        train_ids, test_ids = _split_ids(cfg, ids, timing)
        (stage_dir / "split.json").write_text(
            json.dumps({"meta": meta, "train": train_ids, "test": test_ids}, indent=1) + "\n", encoding="utf-8")

        stage = "reduce"
        train_raw = raw.rows_for(train_ids)
        reducer = fit_reducer(train_raw)
        train_red = apply_reducer(reducer, train_raw)
        scaler = fit_scaler(train_red)
        X_train = apply_scaler(scaler, train_red).values
        X_test = apply_scaler(scaler, apply_reducer(reducer, raw.rows_for(test_ids))).values
        data = make_labeled(train_ids, X_train, timing, cfg.window)
        test_timing = timing.subset(test_ids)

        stage = "grid_search"
        grids = load_grids(cfg.grids) if cfg.grids else default_grids()
        absent = [f for f in cfg.families if f not in grids]
        if absent:
            raise ExperimentError(stage, f"grid file has no entry for {absent}")
        (stage_dir / "models").mkdir()
        (stage_dir / "predictions").mkdir()
        selectors: list[SelectorOutput] = []
        for family in cfg.families:
            stage = f"grid_search:{family}"
            cv = cross_validate(family, grids[family], data, cfg.G, cfg.seed) if cfg.objectives else None
            for objective in cfg.objectives:
                name = selector_name(family, objective)
                stage = f"grid_search:{name}"
                result = select_and_refit(cv, data, objective)
                model: TrainedModel = result.model
                model.reducer, model.scaler = reducer, scaler
                model.meta = dict(meta, selector=name, objective=objective, h_opt=result.h_opt,
                                  cv_scores=[repr(s) for s in result.scores])
                model.save(stage_dir / "models" / f"{name}.json")
                t0 = time.perf_counter()
                labels = predict(model, X_test)
                overhead = time.perf_counter() - t0 if cfg.measure_overhead else None
                records = [prediction_record(pid, [int(c)], n, by_id[pid].variables)
                           for pid, c in zip(test_ids, labels)]
                write_predictions(stage_dir / "predictions" / f"{name}.json", name, "ml", n, records, meta, overhead)
                selectors.append(SelectorOutput(name, "ml", {r["id"]: r["orderings"] for r in records}, overhead))

        for method in cfg.heuristics:
            stage = f"heuristic:{method}"
            records, elapsed = heuristic_records([by_id[pid] for pid in test_ids], method)
            overhead = elapsed if cfg.measure_overhead else None
            write_predictions(stage_dir / "predictions" / f"{method}.json", method, "heuristic", n, records,
                              meta, overhead)
            selectors.append(SelectorOutput(method, "heuristic", {r["id"]: r["orderings"] for r in records},
                                            overhead))

        stage = "evaluate"
        report = build_report(selectors, test_timing, cfg.window, meta)
        (stage_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
    except ExperimentError:
        shutil.rmtree(stage_dir, ignore_errors=True)
        raise
    except Exception as exc:
        shutil.rmtree(stage_dir, ignore_errors=True)
        raise ExperimentError(stage, str(exc)) from exc

    if out_dir.exists():
        shutil.rmtree(out_dir)
    stage_dir.rename(out_dir)
    return report

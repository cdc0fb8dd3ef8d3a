"""Command-line entry point: ``cadorder <subcommand> ...``.

Exit codes: 0 success, 1 stage failure, 2 invalid arguments or missing inputs.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .dataset import DEFAULT_WINDOW, FixtureSpec, load_timings, make_labeled, synth_fixture
from .evalmetrics import build_report
from .experiment import (
    HEURISTICS,
    ConfigError,
    ExperimentConfig,
    ExperimentError,
    artifact_meta,
    config_hash,
    file_digest,
    heuristic_records,
    prediction_record,
    read_predictions,
    run_experiment,
    selector_name,
    write_predictions,
)
from .featgen import FeatureMatrix, apply_reducer, apply_scaler, featurize, fit_reducer, fit_scaler
from .learners import FAMILIES, TrainedModel, predict_raw
from .modelsel import OBJECTIVES, default_grids, grid_search, load_grids
from .polysys import parse_problem_file, write_problem_file

log = logging.getLogger("cadorder")


class UsageError(Exception):
    """Bad arguments or missing input files (exit code 2)."""


def _require(path: str | None, what: str) -> Path:
    if path is None or not Path(path).is_file():
        raise UsageError(f"{what} not found: {path}")
    return Path(path)


def cmd_featurize(args) -> None:
    src = _require(args.problems, "problem file")
    problems = parse_problem_file(src)
    fm = featurize(problems)
    meta = artifact_meta(config_hash({"problems": file_digest(src)}), None)
    fm.write_csv(args.out, header_comment=json.dumps(meta, sort_keys=True))
    log.info("wrote %d x %d features to %s", len(fm.ids), len(fm.columns), args.out)


def cmd_train(args) -> None:
    feats = FeatureMatrix.read_csv(_require(args.features, "features file"))
    timing = load_timings(_require(args.timings, "timings file"))
    if args.grid:
        grids = load_grids(_require(args.grid, "grid file"))
    else:
        grids = default_grids()
    if args.family not in grids:
        raise UsageError(f"grid has no entry for family {args.family!r}")
    known = set(timing.ids)
    ids = [pid for pid in feats.ids if pid in known]
    if args.phase != "all":
        phase = dict(zip(timing.ids, timing.phases))
        ids = [pid for pid in ids if phase[pid] == args.phase]
    if len(ids) < args.folds:
        raise UsageError(f"only {len(ids)} problems with both features and timings")
    raw = feats.rows_for(ids)
    reducer = fit_reducer(raw)
    red = apply_reducer(reducer, raw)
    scaler = fit_scaler(red)
    data = make_labeled(ids, apply_scaler(scaler, red).values, timing, args.window)
    result = grid_search(args.family, grids[args.family], data, args.objective, args.folds, args.seed)
    h = config_hash({"features": file_digest(args.features), "timings": file_digest(args.timings),
                     "grid": file_digest(args.grid) if args.grid else "default", "family": args.family,
                     "objective": args.objective, "folds": args.folds, "window": args.window,
                     "phase": args.phase})
    model = result.model
    model.reducer, model.scaler = reducer, scaler
    model.meta = dict(artifact_meta(h, args.seed, args.window), selector=selector_name(args.family, args.objective),
                      objective=args.objective, h_opt=result.h_opt, cv_scores=[repr(s) for s in result.scores])
    model.save(args.out)
    log.info("h_opt=%d %s -> %s", result.h_opt, result.best_params, args.out)


def cmd_predict(args) -> None:
    model = TrainedModel.load(_require(args.model, "model file"))
    feats = FeatureMatrix.read_csv(_require(args.features, "features file"))
    t0 = time.perf_counter()
    labels = predict_raw(model, feats.values)
    overhead = time.perf_counter() - t0 if args.measure_overhead else None
    n = _n_from_classes(model.n_classes)
    name = args.name or model.meta.get("selector", model.family.upper())
    records = [prediction_record(pid, [int(c)], n) for pid, c in zip(feats.ids, labels)]
    meta = artifact_meta(model.meta.get("config_hash", ""), model.seed, model.meta.get("window"))
    write_predictions(args.out, name, "ml", n, records, meta, overhead)


def _n_from_classes(n_classes: int) -> int:
    n, f = 1, 1
    while f < n_classes:
        n += 1
        f *= n
    if f != n_classes:
        raise ValueError(f"{n_classes} classes is not a factorial")
    return n


def cmd_heuristic(args) -> None:
    src = _require(args.problems, "problem file")
    problems = parse_problem_file(src)
    if not problems:
        raise UsageError("problem file is empty")
    records, elapsed = heuristic_records(problems, args.method)
    meta = artifact_meta(config_hash({"problems": file_digest(src), "method": args.method}), None)
    write_predictions(args.out, args.method, "heuristic", problems[0].n, records, meta,
                      elapsed if args.measure_overhead else None)


def cmd_evaluate(args) -> None:
    timing = load_timings(_require(args.timings, "timings file"))
    if args.phase != "all":
        timing = timing.subset([pid for pid, ph in zip(timing.ids, timing.phases) if ph == args.phase])
        if not timing.ids:
            raise UsageError(f"no {args.phase}-phase rows in {args.timings}")
    selectors = [read_predictions(_require(p, "prediction file")) for p in args.predictions]
    digests = [file_digest(args.timings)] + [file_digest(p) for p in args.predictions]
    meta = artifact_meta(config_hash({"inputs": digests, "window": args.window, "phase": args.phase}), None,
                         args.window)
    report = build_report(selectors, timing, args.window, meta)
    Path(args.out).write_text(report.to_json(), encoding="utf-8")


def cmd_synth(args) -> None:
    spec_dict = {}
    if args.spec:
        spec_dict = json.loads(_require(args.spec, "fixture spec").read_text(encoding="utf-8"))
    spec = FixtureSpec.from_dict(spec_dict)
    problems, timing = synth_fixture(spec, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_problem_file(out / "problems.jsonl", problems)
    timing.write_csv(out / "timings.csv")
    manifest = {"meta": artifact_meta(config_hash({"spec": spec.__dict__}), args.seed),
                "spec": spec.__dict__, "files": ["problems.jsonl", "timings.csv"]}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def cmd_run(args) -> None:
    try:
        cfg = ExperimentConfig.load(_require(args.config, "config file"))
        if args.out:
            cfg.output_dir = args.out
        cfg.validate()
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    report = run_experiment(cfg)
    for sel in report.selectors:
        log.info("%-8s accuracy %6.2f%%  time %10.3f s", sel["name"], sel["accuracy_percent"], sel["total_time_s"])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cadorder", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"cadorder {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("featurize", help="compute raw feature rows for a problem file")
    s.add_argument("--problems", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_featurize)

    s = sub.add_parser("train", help="grid-search cross-validate one model family")
    s.add_argument("--features", required=True)
    s.add_argument("--timings", required=True)
    s.add_argument("--family", required=True, choices=FAMILIES)
    s.add_argument("--objective", default="time", choices=OBJECTIVES)
    s.add_argument("--folds", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--grid")
    s.add_argument("--window", type=float, default=DEFAULT_WINDOW)
    s.add_argument("--phase", default="train", choices=("train", "test", "all"),
                   help="which timing rows to train on (default: train)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="apply a trained model to raw feature rows")
    s.add_argument("--model", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--name")
    s.add_argument("--measure-overhead", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("heuristic", help="run a human-made ordering heuristic")
    s.add_argument("--method", required=True, choices=sorted(HEURISTICS))
    s.add_argument("--problems", required=True)
    s.add_argument("--measure-overhead", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_heuristic)

    s = sub.add_parser("evaluate", help="score prediction files against timings")
    s.add_argument("--timings", required=True)
    s.add_argument("--predictions", required=True, nargs="+")
    s.add_argument("--window", type=float, default=DEFAULT_WINDOW)
    s.add_argument("--phase", default="all", choices=("train", "test", "all"))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("synth", help="generate a synthetic problem set with planted timings")
    s.add_argument("--spec")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("run", help="run the full experiment described by a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="override the config's output_dir")
    s.set_defaults(func=cmd_run)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        print(f"cadorder {args.command}: {exc}", file=sys.stderr)
        return 2
    except ExperimentError as exc:
        print(f"cadorder {args.command}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, RuntimeError, OSError) as exc:
        print(f"cadorder {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Numbered acceptance criteria, each run at its stated tolerance and time limit.

The conftest prints one PASS/FAIL line per criterion at the end of the session.
"""
import itertools
import random

import numpy as np
import pytest
import sympy as sp

from cadorder.algebra import discriminant
from cadorder.dataset import (
    FixtureSpec,
    RerunAt,
    TimingMatrix,
    load_timings,
    make_labeled,
    synth_fixture,
    validate_training_censoring,
)
from cadorder.evalmetrics import (
    accuracy_within,
    random_expectation,
    tie_aware_metrics,
    virtual_best_worst,
)
from cadorder.experiment import ExperimentConfig, run_experiment
from cadorder.featgen import apply_reducer, apply_scaler, featurize, fit_reducer, fit_scaler
from cadorder.heuristics import brown_orderings, sotd_orderings
from cadorder.learners import DTParams, KNNParams, MLPParams, SVMParams
from cadorder.learners.mlp import init_params, loss_and_grad
from cadorder.modelsel import HyperGrid, grid_search, make_folds
from cadorder.polysys import Polynomial, ProblemInstance, degree_in, parse_polynomial
from cadorder.polysys import write_problem_file

from oracles import brute_force_cv, leibniz_det, naive_sotd_argmin, sylvester_numeric, to_sympy

acceptance = pytest.mark.acceptance


# -- shared fixtures -----------------------------------------------------------

def _cv_data():
    """27 fixture problems through the full feature pipeline."""
    probs, tm = synth_fixture(FixtureSpec(clusters=3, problems_per_cluster=9), seed=2)
    fm = featurize(probs)
    r = fit_reducer(fm.values)
    red = apply_reducer(r, fm.values)
    return make_labeled(fm.ids, apply_scaler(fit_scaler(red), red), tm)


CV_GRIDS = {
    "dt": [DTParams("gini", 1), DTParams("entropy", 4), DTParams("gini", 8)],
    "knn": [KNNParams(1), KNNParams(4), KNNParams(9, "uniform")],
    "mlp": [MLPParams(hidden_size=5, max_epochs=40), MLPParams(hidden_size=10, activation="relu", max_epochs=40),
            MLPParams(hidden_size=8, activation="identity", l2_alpha=1e-2, max_epochs=40)],
    "svm": [SVMParams(C=1.0, gamma=0.1), SVMParams(C=2.41, gamma=0.0097), SVMParams(C=1.66, gamma=0.5)],
}


def _oracle_agreement(objective):
    data = _cv_data()
    assert len(data.ids) <= 30
    for family, combos in CV_GRIDS.items():
        grid = HyperGrid(family, combos)
        assert grid.H <= 3
        res = grid_search(family, grid, data, objective, G=3, seed=11)
        f1s, times = brute_force_cv(family, combos, data.X, data.y, data.ids, data.timing,
                                    make_folds(data.ids, 3, 11).folds, 11, data.n_classes)
        ref = f1s if objective == "f1" else times
        # independent float implementations may differ in the last bit; the selection must not
        assert np.allclose(res.scores, ref, rtol=0, atol=1e-12), family
        assert res.h_opt == int(np.argmax(ref)), family


@acceptance(1, "time-objective grid search equals brute-force retraining")
def test_criterion_01_time_objective_oracle(budget):
    with budget(5):
        _oracle_agreement("time")


@acceptance(2, "F1-objective grid search equals brute-force retraining")
def test_criterion_02_f1_objective_oracle(budget):
    with budget(5):
        _oracle_agreement("f1")


@acceptance(3, "time-CV decision tree total test time <= F1-CV decision tree")
def test_criterion_03_direction_of_effect(budget, tmp_path):
    with budget(60):
        spec = FixtureSpec(clusters=10, problems_per_cluster=20, n=3, noise=0.05, trap_penalty=20.0)
        problems, timing = synth_fixture(spec, seed=0)
        assert len(problems) == 200
        write_problem_file(tmp_path / "problems.jsonl", problems)
        timing.write_csv(tmp_path / "timings.csv")
        cfg = ExperimentConfig(str(tmp_path / "problems.jsonl"), str(tmp_path / "timings.csv"),
                               str(tmp_path / "out"), families=["dt"], heuristics=[], seed=0)
        report = run_experiment(cfg)
        by_name = {s["name"]: s for s in report.selectors}
        print(f"DT-O {by_name['DT-O']['total_time_s']:.3f} s, DT-N {by_name['DT-N']['total_time_s']:.3f} s")
        assert by_name["DT-N"]["total_time_s"] <= by_name["DT-O"]["total_time_s"]


@acceptance(4, "Brown heuristic on the quadratic gives [c, b, a, x]")
def test_criterion_04_brown_quadratic(budget):
    with budget(1):
        names = ("x", "a", "b", "c")
        prob = ProblemInstance("quad", names, (parse_polynomial("a*x^2 + b*x + c", names),))
        pred = brown_orderings(prob)
        assert [o.names(names) for o in pred.orderings] == [["c", "b", "a", "x"]]


def _random_system(rng, n):
    polys = []
    while not polys:
        for _ in range(rng.randint(1, 3)):
            terms = {}
            for _ in range(rng.randint(1, 4)):
                e = [0] * n
                for _ in range(rng.randint(0, 3)):  # total degree <= 3
                    e[rng.randrange(n)] += 1
                terms[tuple(e)] = rng.randint(-3, 3)
            p = Polynomial(terms, n)
            if not p.is_zero():
                polys.append(p)
    return ProblemInstance("r", tuple(f"v{i}" for i in range(n)), tuple(polys))


@acceptance(5, "sotd orderings equal the argmin of an independent projection pipeline")
def test_criterion_05_sotd_oracle(budget):
    rng = random.Random(2024)
    with budget(30):
        for _ in range(50):
            prob = _random_system(rng, rng.choice([2, 3]))
            syms = sp.symbols(" ".join(prob.variables))
            ref, _ = naive_sotd_argmin([to_sympy(p, syms) for p in prob.polys], syms)
            assert {o.sequence for o in sotd_orderings(prob).orderings} == ref


def _disc_identity(coeffs, support, points, dtype):
    """Check D(y0) * lc(y0) == (-1)^(d(d-1)/2) * det Sylvester(p, p')(y0) for every polynomial.

    ``coeffs`` rows give the coefficient of x^i y^j for each (i, j) in ``support``.
    Returns the number of polynomials checked.
    """
    ys = np.array(points, dtype=dtype)
    pows = np.stack([ys ** j for j in range(max(j for _, j in support) + 1)])  # (j, points)
    checked = 0
    for d in (2, 3):
        rows = [c for c in coeffs if max((i for (i, _), v in zip(support, c) if v), default=0) == d]
        if not rows:
            continue
        rows = np.array(rows, dtype=dtype)
        # coefficient of x^i evaluated at each point: (N, points, d+1), leading first
        A = np.zeros((len(rows), len(points), d + 1), dtype=dtype)
        for col, (i, j) in enumerate(support):
            if i <= d:
                A[:, :, d - i] += rows[:, col][:, None] * pows[j][None, :]
        deriv = A[:, :, :-1] * np.array([d - k for k in range(d)], dtype=dtype)
        det = leibniz_det(sylvester_numeric(A, deriv))
        sign = -1 if (d * (d - 1) // 2) % 2 else 1
        D_vals = np.zeros((len(rows), len(points)), dtype=dtype)
        for r, c in enumerate(rows.tolist()):
            p = Polynomial({e: int(v) for e, v in zip(support, c) if v}, 2)
            D = discriminant(p, 0)
            assert degree_in(D, 0) == 0
            assert degree_in(D, 1) + degree_in(p.coefficients_in(0)[-1], 1) < len(points)
            for (_, j), v in D.items():
                D_vals[r] += v * pows[j] if j < len(pows) else v * ys ** j
        assert np.array_equal(D_vals * A[:, :, 0], sign * det)
        checked += len(rows)
    return checked


@acceptance(6, "discriminant formula equals the Sylvester-determinant oracle on the exhaustive sweep")
def test_criterion_06_discriminant_sweep(budget):
    with budget(60):
        # exhaustive: all coefficient vectors in {-2..2} on the monomials of total degree <= 3
        # that are at most linear in y, restricted to degree >= 2 in x
        support = [(0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1), (3, 0)]
        coeffs = list(itertools.product(range(-2, 3), repeat=len(support)))
        assert len(coeffs) == 5 ** 7
        # the identity has y-degree <= 7 here, so 9 evaluation points decide it exactly
        n = _disc_identity(coeffs, support, range(-4, 5), np.int64)
        assert n == 5 ** 7 - 5 ** 4
        # seeded sample of the full dense total-degree-3 set, exact integers, 16 points
        full = [(i, j) for i in range(4) for j in range(4) if i + j <= 3]
        rng = np.random.default_rng(6)
        sample = [tuple(int(v) for v in row) for row in rng.integers(-2, 3, size=(3000, len(full)))]
        assert _disc_identity(sample, full, range(-8, 8), object) > 2500


@acceptance(7, "MLP analytic gradient matches central differences (step 1e-5, rel err < 1e-4)")
def test_criterion_07_mlp_gradient(budget):
    with budget(5):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(5, 4))
        y = np.array([0, 1, 2, 1, 0])
        for activation in ("identity", "tanh", "relu"):
            params = init_params(4, 6, 3, seed=3)
            params["b1"] = rng.normal(scale=0.5, size=6)
            params["b2"] = rng.normal(scale=0.5, size=3)
            _, grads = loss_and_grad(params, X, y, 3, 1e-3, activation)
            h = 1e-5
            for name, arr in params.items():
                for idx in np.ndindex(arr.shape):
                    old = arr[idx]
                    arr[idx] = old + h
                    up = loss_and_grad(params, X, y, 3, 1e-3, activation)[0]
                    arr[idx] = old - h
                    down = loss_and_grad(params, X, y, 3, 1e-3, activation)[0]
                    arr[idx] = old
                    fd, g = (up - down) / (2 * h), grads[name][idx]
                    scale = max(abs(fd), abs(g))
                    if scale > 0:
                        assert abs(fd - g) / scale < 1e-4, (activation, name, idx, fd, g)


def _tm(rows):
    rows = np.asarray(rows, dtype=float)
    k = rows.shape[1]
    n = {2: 2, 6: 3, 24: 4}[k]
    return TimingMatrix([f"p{i}" for i in range(len(rows))], n, rows, np.zeros(rows.shape, bool),
                        np.full(len(rows), 1e4), ["test"] * len(rows))


@acceptance(8, "metric identities, window boundary and the tie-aware hand fixture")
def test_criterion_08_metric_identities(budget):
    with budget(1):
        rng = np.random.default_rng(8)
        for _ in range(20):
            rows = rng.integers(1, 65, size=(int(rng.integers(1, 40)), 6)).astype(float)
            vb, vw = virtual_best_worst(_tm(rows))
            assert vb == sum(min(r) for r in rows.tolist())
            assert vw == sum(max(r) for r in rows.tolist())
        tm = _tm([[10.0, 12.0]])
        assert accuracy_within({"p0": 1}, tm, window=0.2) == 100.0
        # p0: targets {0, 1}, predicted {1, 2}, times (10, 12, 30)
        # p1: all six tied at 5.0, predicted {3}
        # p2: best 2.0 at ordering 4, predicted {0, 4} with times (3.0, 2.0)
        tm = _tm([[10.0, 12.0, 30.0, 40.0, 50.0, 60.0],
                  [5.0] * 6,
                  [3.0, 9.0, 9.0, 9.0, 2.0, 9.0]])
        acc, tot = tie_aware_metrics({"p0": [1, 2], "p1": [3], "p2": [0, 4]}, tm)
        assert acc == (50.0 + 100.0 + 50.0) / 3
        assert tot == 21.0 + 5.0 + 2.5


@acceptance(9, "timeout protocol: all-timeout training row reruns at 32 s, test timeouts load as 64 s")
def test_criterion_09_censoring(budget, tmp_path):
    with budget(1):
        assert validate_training_censoring(["timeout"] * 24, initial_limit=16.0) == RerunAt(32.0)
        path = tmp_path / "t.csv"
        lines = ["problem_id,ordering_index,time_s,status,phase,limit_s"]
        lines += [f"q,{j},{'64' if j % 2 else 1.5 + j},{'timeout' if j % 2 else 'ok'},test,64" for j in range(6)]
        path.write_text("\n".join(lines) + "\n")
        m = load_timings(path)
        assert m.times[0, 1::2].tolist() == [64.0] * 3 and m.timed_out[0, 1::2].all()


@acceptance(10, "two full experiment runs produce byte-identical report and models")
def test_criterion_10_determinism(budget, tmp_path):
    problems, timing = synth_fixture(FixtureSpec(), seed=7)
    write_problem_file(tmp_path / "problems.jsonl", problems)
    timing.write_csv(tmp_path / "timings.csv")
    outs = []
    with budget(120):
        for run in ("a", "b"):
            cfg = ExperimentConfig(str(tmp_path / "problems.jsonl"), str(tmp_path / "timings.csv"),
                                   str(tmp_path / run), seed=7)  # default grids, all four families
            run_experiment(cfg)
            outs.append(tmp_path / run)
    a, b = outs
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    models = sorted(p.name for p in (a / "models").iterdir())
    assert models == ["DT-N.json", "DT-O.json", "KNN-N.json", "KNN-O.json",
                      "MLP-N.json", "MLP-O.json", "SVM-N.json", "SVM-O.json"]
    for name in models:
        assert (a / "models" / name).read_bytes() == (b / "models" / name).read_bytes()


def _check_reduced(X):
    r = fit_reducer(X)
    Z = apply_reducer(r, X)
    assert not np.any(np.all(Z == Z[0], axis=0)), "constant column survived"
    assert np.unique(Z, axis=1).shape[1] == Z.shape[1], "duplicate column pair survived"
    again = fit_reducer(Z)
    assert again.kept_columns == list(range(Z.shape[1])) and again.merged_groups == {}
    assert np.array_equal(apply_reducer(again, Z), Z)


@acceptance(11, "reducer leaves no constant or duplicate column and is idempotent")
def test_criterion_11_reducer(budget):
    with budget(5):
        problems, _ = synth_fixture(FixtureSpec(), seed=1)
        _check_reduced(featurize(problems).values)
        rng = np.random.default_rng(11)
        for _ in range(20):
            X = rng.integers(0, 3, size=(int(rng.integers(3, 15)), 30)).astype(float)
            X[:, rng.integers(0, 30, size=5)] = X[:, rng.integers(0, 30, size=5)]
            X[:, int(rng.integers(0, 30))] = 4.0
            _check_reduced(X)


@acceptance(12, "selector predicting every ordering scores the analytic random accuracy")
def test_criterion_12_tie_aware_random(budget):
    with budget(1):
        rng = np.random.default_rng(12)
        for k in (2, 6, 24):
            tm = _tm(rng.uniform(0.5, 64.0, size=(50, k)))
            every = {pid: list(range(k)) for pid in tm.ids}
            assert tie_aware_metrics(every, tm)[0] == random_expectation(tm)[0]
        _, fixture = synth_fixture(FixtureSpec(), seed=3)
        every = {pid: list(range(6)) for pid in fixture.ids}
        assert tie_aware_metrics(every, fixture)[0] == random_expectation(fixture)[0]

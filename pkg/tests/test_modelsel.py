import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cadorder.dataset import FixtureSpec, TimingMatrix, make_labeled, synth_fixture
from cadorder.featgen import apply_reducer, apply_scaler, featurize, fit_reducer, fit_scaler
from cadorder.learners import DTParams, KNNParams, MLPParams, SVMParams
from cadorder.modelsel import (
    GridSearchError,
    HyperGrid,
    default_grids,
    f1_macro,
    grid_search,
    load_grids,
    make_folds,
    objective_f1,
    objective_time,
)

from oracles import brute_force_cv, macro_f1_reference


def test_fold_sizes_and_determinism():
    f = make_folds([f"p{i}" for i in range(6)], 3, seed=0)
    assert [len(x) for x in f.folds] == [2, 2, 2]
    f = make_folds([f"p{i}" for i in range(7)], 3, seed=0)
    assert sorted(len(x) for x in f.folds) == [2, 2, 3]
    ids = [f"p{i}" for i in range(50)]
    a, b = make_folds(ids, 3, seed=4), make_folds(ids, 3, seed=4)
    assert a.folds == b.folds
    flat = [i for fold in a.folds for i in fold]
    assert sorted(flat) == sorted(ids) and len(flat) == len(set(flat))
    with pytest.raises(ValueError):
        make_folds(ids[:2], 3, seed=0)
    with pytest.raises(ValueError):
        make_folds(ids, 1, seed=0)


def test_f1_examples():
    assert f1_macro([0, 1, 2, 2], [0, 1, 2, 2]) == 1.0
    assert f1_macro([0, 1, 0, 1], [1, 0, 1, 0]) == 0.0
    assert f1_macro([0, 0, 1], [0, 1, 1]) == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        f1_macro([0, 1], [0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=40))
def test_f1_matches_reference(pairs):
    t, p = map(np.array, zip(*pairs))
    assert f1_macro(t, p) == pytest.approx(macro_f1_reference(t, p), abs=1e-12)


def test_objective_means(monkeypatch):
    perfect = [np.array([0, 1]), np.array([1, 0])]
    assert objective_f1(perfect, perfect) == 1.0
    assert objective_f1([np.array([0, 1]), np.array([1, 0])], [np.array([0, 1]), np.array([0, 1])]) == 0.5
    with pytest.raises(ValueError):
        objective_f1(perfect, perfect[:1])
    from cadorder import modelsel

    seq = iter([0.6, 0.6, 0.9])
    monkeypatch.setattr(modelsel, "f1_macro", lambda *a, **k: next(seq))
    assert objective_f1([np.zeros(1)] * 3, [np.zeros(1)] * 3) == pytest.approx(0.7)


def _tm(rows, ids=None):
    rows = np.asarray(rows, dtype=float)
    ids = ids or [f"p{i}" for i in range(len(rows))]
    return TimingMatrix(ids, 2, rows, np.zeros(rows.shape, bool), np.full(len(rows), 64.0), ["train"] * len(rows))


def test_objective_time_examples():
    tm = _tm([[2.0, 9.0], [1.0, 4.0], [3.0, 4.0]])
    folds = [["p0"], ["p1", "p2"]]
    assert objective_time([np.array([0]), np.array([1, 1])], folds, tm) == -3.0
    best = objective_time([np.array([0]), np.array([0, 0])], folds, tm)
    assert best == -np.mean([2.0, 2.0])
    # h1 fold means (2, 4) beat h2 fold means (1, 10)
    tm = _tm([[2.0, 1.0], [4.0, 10.0]])
    h1 = objective_time([np.array([0]), np.array([0])], [["p0"], ["p1"]], tm)
    h2 = objective_time([np.array([1]), np.array([1])], [["p0"], ["p1"]], tm)
    assert h1 == -3.0 and h2 == -5.5 and h1 > h2


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.0, 100.0))
def test_time_argmax_invariant_under_shift(seed, shift):
    rng = np.random.default_rng(seed)
    rows = rng.uniform(0.1, 50, size=(12, 2))
    folds = [[f"p{i}" for i in range(0, 6)], [f"p{i}" for i in range(6, 12)]]
    preds = [[rng.integers(0, 2, size=6) for _ in range(2)] for _ in range(4)]
    a = [objective_time(p, folds, _tm(rows)) for p in preds]
    b = [objective_time(p, folds, _tm(rows + shift)) for p in preds]
    assert np.allclose(np.array(a) - shift, b)
    # within-fold permutation leaves the value unchanged
    perm = rng.permutation(6)
    p = preds[0]
    moved = [p[0][perm], p[1]]
    assert objective_time(moved, [[folds[0][i] for i in perm], folds[1]], _tm(rows)) == pytest.approx(a[0])


def _trap_fixture():
    """Two KNN combinations with identical fold confusion matrices but different errors.

    With the three nearest neighbours, uniform voting mislabels the query near 50
    (a trap row costing 30 s when mislabeled), distance voting mislabels the query
    near 0 (costing 1.1 s).
    """
    ids = [f"p{i:02d}" for i in range(12)]
    part = make_folds(ids, 2, seed=0)
    fold_a = [(0.1, 0), (50.1, 0), (-3.0, 0), (-4.0, 0), (53.0, 0), (54.0, 0)]
    fold_b = [(0.0, 1), (1.0, 0), (-1.0, 0), (50.0, 0), (51.0, 1), (49.0, 1)]
    where = {}
    for pid, pt in zip(part.folds[0], fold_a):
        where[pid] = pt
    for pid, pt in zip(part.folds[1], fold_b):
        where[pid] = pt
    X = np.array([[where[p][0]] for p in ids])
    rows = []
    for p in ids:
        x, c = where[p]
        wrong = 30.0 if x == 50.1 else 1.1
        rows.append([1.0, wrong] if c == 0 else [wrong, 1.0])
    return make_labeled(ids, X, _tm(rows, ids))


def test_trap_fixture_time_objective_avoids_trap():
    data = _trap_fixture()
    uniform, distance = KNNParams(k=3, weighting="uniform"), KNNParams(k=3, weighting="distance")
    for combos, trap_free in (([uniform, distance], 1), ([distance, uniform], 0)):
        grid = HyperGrid("knn", combos)
        res_f1 = grid_search("knn", grid, data, "f1", G=2, seed=0)
        res_t = grid_search("knn", grid, data, "time", G=2, seed=0)
        assert res_f1.f1_scores[0] == res_f1.f1_scores[1]
        assert res_f1.h_opt == 0
        assert res_t.h_opt == trap_free
        assert res_t.time_scores[trap_free] > res_t.time_scores[1 - trap_free]


def _small_data(seed=0, per=8):
    probs, tm = synth_fixture(FixtureSpec(clusters=3, problems_per_cluster=per), seed=seed)
    fm = featurize(probs)
    r = fit_reducer(fm.values)
    Xr = apply_reducer(r, fm.values)
    X = apply_scaler(fit_scaler(Xr), Xr)
    return make_labeled(fm.ids, X, tm)


GRIDS = {
    "dt": [DTParams("gini", 1), DTParams("entropy", 3), DTParams("gini", 5)],
    "knn": [KNNParams(1), KNNParams(3), KNNParams(5, "uniform")],
    "mlp": [MLPParams(hidden_size=4, max_epochs=30), MLPParams(hidden_size=8, activation="relu", max_epochs=30)],
    "svm": [SVMParams(C=1.0, gamma=0.1), SVMParams(C=2.41, gamma=0.0097)],
}


@pytest.mark.parametrize("family", sorted(GRIDS))
def test_grid_search_matches_brute_force(family):
    data = _small_data()
    grid = HyperGrid(family, GRIDS[family])
    f1s, times = brute_force_cv(family, grid.combos, data.X, data.y, data.ids, data.timing,
                                make_folds(data.ids, 3, 7).folds, 7, data.n_classes)
    for obj, ref in (("f1", f1s), ("time", times)):
        res = grid_search(family, grid, data, obj, G=3, seed=7)
        assert np.allclose(res.scores, ref, rtol=0, atol=1e-12)
        assert res.h_opt == int(np.argmax(ref))
        assert len(res.fold_predictions) == 3 * grid.H


def test_single_combination_grid_selects_zero():
    data = _small_data(1)
    grid = HyperGrid("dt", [DTParams()])
    for obj in ("f1", "time"):
        res = grid_search("dt", grid, data, obj, G=3, seed=0)
        assert res.h_opt == 0 and res.best_params == DTParams()


def test_grid_search_errors_are_tagged():
    data = _small_data(2)
    grid = HyperGrid("knn", [KNNParams(1), KNNParams(200)])
    with pytest.raises(GridSearchError) as err:
        grid_search("knn", grid, data, "f1", G=3, seed=0)
    assert err.value.h == 1 and err.value.g == 0
    with pytest.raises(ValueError):
        grid_search("knn", grid, data, "accuracy")
    with pytest.raises(ValueError):
        grid_search("dt", grid, data, "f1")


def test_grid_files(tmp_path):
    path = tmp_path / "g.json"
    path.write_text(json.dumps({"dt": {"max_depth": [2, 4], "criterion": ["gini", "entropy"]}}))
    g = load_grids(path)["dt"]
    assert g.combos == [DTParams("gini", 2), DTParams("entropy", 2), DTParams("gini", 4), DTParams("entropy", 4)]
    path.write_text(json.dumps({"forest": {"n": [1]}}))
    with pytest.raises(ValueError):
        load_grids(path)
    with pytest.raises(ValueError):
        HyperGrid("dt", [DTParams(), DTParams()])
    with pytest.raises(ValueError):
        HyperGrid("dt", [])


def test_default_grids_cover_reference_values():
    g = default_grids()
    assert set(g) == {"dt", "knn", "mlp", "svm"}
    assert {c.max_depth for c in g["dt"].combos} == set(range(1, 21))
    assert DTParams("gini", 14) in g["dt"].combos and DTParams("entropy", 6) in g["dt"].combos
    assert {c.k for c in g["knn"].combos} == set(range(1, 31))
    svm = g["svm"].combos
    assert any(c.C == 2.41 and c.gamma == 0.0097 for c in svm)
    assert any(c.C == 1.66 for c in svm)
    assert {c.activation for c in g["mlp"].combos} == {"identity", "tanh", "relu"}

import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from e2tree.dataset import DataError, split_train_test
from e2tree.forest import (
    LEAF,
    Forest,
    ForestConfig,
    RegressionTree,
    SplitRule,
    _best_categorical,
    _best_numeric,
    fit_forest,
    grow_tree,
    importances,
    oob_metrics,
    route_to_terminal,
)

from conftest import make_table


def hand_tree():
    # 0: x0 <= 1.5 ? 1 : 2 ; 2: x1 in {0, 2} ? 3 : 4
    return RegressionTree(
        feature=np.array([0, LEAF, 1, LEAF, LEAF]),
        threshold=np.array([1.5, np.nan, np.nan, np.nan, np.nan]),
        left_mask=np.array([0, 0, 0b101, 0, 0]),
        is_cat=np.array([False, False, True, False, False]),
        left=np.array([1, LEAF, 3, LEAF, LEAF]),
        right=np.array([2, LEAF, 4, LEAF, LEAF]),
        value=np.array([0.0, 10.0, 0.0, 20.0, 30.0]),
        n_node=np.zeros(5, dtype=np.int64),
        mse_node=np.zeros(5),
        purity_gain=np.zeros(5),
    )


def route_oracle(row):
    if row[0] <= 1.5:
        return 1
    return 3 if int(row[1]) in (0, 2) else 4


@given(st.floats(-5, 5), st.integers(0, 3))
def test_routing_matches_oracle(x0, x1):
    t = hand_tree()
    assert route_to_terminal(t, [x0, x1]) == route_oracle([x0, x1])


def test_routing_vectorized():
    t = hand_tree()
    X = np.array([[1.5, 1], [1.6, 0], [2.0, 1], [2.0, 2], [-1, 3]], dtype=float)
    assert t.apply(X).tolist() == [route_oracle(r) for r in X]
    assert t.predict(X).tolist() == [10, 20, 30, 20, 10]


def test_split_rule_describe():
    names, levels = ["a", "s"], [(), ("p", "q", "r")]
    assert SplitRule(0, threshold=0.75).describe(names) == "a ≤ 0.75"
    assert SplitRule(0, threshold=0.75).describe(names, side="right") == "a > 0.75"
    r = SplitRule(1, left_levels=frozenset({0, 2}))
    assert r.describe(names, levels) == "s = (p, r)"
    assert r.describe(names, levels, "right") == "s = q"
    assert r.describe(names, levels, "left", present=[1, 2]) == "s = r"
    assert r.describe(names, levels, "right", present=[1, 2]) == "s = q"


def sse(v):
    return float(((v - v.mean()) ** 2).sum()) if len(v) else 0.0


@settings(max_examples=80)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(-20, 20)), min_size=2, max_size=25))
def test_best_numeric_brute_force(pairs):
    x = np.array([p[0] for p in pairs], dtype=float)
    y = np.array([p[1] for p in pairs], dtype=float)
    got = _best_numeric(x, y, 1)
    cuts = [(a + b) / 2 for a, b in zip(np.unique(x)[:-1], np.unique(x)[1:])]
    if not cuts:
        assert got is None
        return
    best = min(sse(y[x <= c]) + sse(y[x > c]) for c in cuts)
    thr = got[1]
    assert sse(y[x <= thr]) + sse(y[x > thr]) == pytest.approx(best, abs=1e-8)


@settings(max_examples=80)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(-20, 20)), min_size=2, max_size=25))
def test_best_categorical_brute_force(pairs):
    c = np.array([p[0] for p in pairs])
    y = np.array([p[1] for p in pairs], dtype=float)
    got = _best_categorical(c, y, 1)
    present = np.unique(c).tolist()
    if len(present) < 2:
        assert got is None
        return
    best = np.inf
    for r in range(1, len(present)):
        for sub in itertools.combinations(present, r):
            m = np.isin(c, sub)
            best = min(best, sse(y[m]) + sse(y[~m]))
    mask = got[2]
    m = ((mask >> c) & 1) == 1
    assert sse(y[m]) + sse(y[~m]) == pytest.approx(best, abs=1e-8)


def grown(seed=0, n=60, min_leaf=5):
    rng = np.random.default_rng(seed)
    X = np.column_stack([rng.normal(size=n), rng.integers(0, 4, n)]).astype(float)
    y = X[:, 0] * 2 + (X[:, 1] == 2) + rng.normal(0, 0.1, n)
    sample = rng.integers(0, n, n)
    tree = grow_tree(X, y, np.array([False, True]), 2, min_leaf, rng, sample)
    return tree, X, y, sample


@pytest.mark.parametrize("seed", range(5))
def test_leaf_values_are_in_bag_means(seed):
    tree, X, y, sample = grown(seed)
    leaf = tree.apply(X[sample])
    for lf in tree.leaves():
        vals = y[sample][leaf == lf]
        assert len(vals) == tree.n_node[lf]
        assert tree.value[lf] == pytest.approx(vals.mean())


@pytest.mark.parametrize("seed", range(5))
def test_purity_bookkeeping(seed):
    tree, X, y, sample = grown(seed)
    ys = y[sample]
    root = sse(ys)
    leaf = tree.apply(X[sample])
    leaves = sum(sse(ys[leaf == lf]) for lf in tree.leaves())
    assert tree.purity_gain.sum() == pytest.approx(root - leaves, rel=1e-9)
    assert (tree.purity_gain >= -1e-9).all()


@pytest.mark.parametrize("seed", range(5))
def test_nodesize_rule(seed):
    tree, *_ = grown(seed, min_leaf=7)
    internal = tree.feature != LEAF
    assert (tree.n_node[internal] > 7).all()


def test_min_leaf_n_gives_single_leaf():
    tree, X, y, sample = grown(0, n=30, min_leaf=30)
    assert tree.n_nodes == 1
    assert tree.value[0] == pytest.approx(y[sample].mean())


def test_single_tree_no_split_grand_mean():
    data = make_table(np.arange(20.0)[:, None], np.arange(20.0))
    f = fit_forest(data, np.arange(20), ForestConfig(n_trees=1, mtry=1, min_leaf=20))
    boot = f.trees[0].in_bag
    assert f.predict(np.array([[3.0]]))[0] == pytest.approx((boot * np.arange(20)).sum() / 20)


def synthetic(n=200, seed=1):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    X[:, 2] = 1.0  # constant: never used
    y = 3 * X[:, 0] + 0.2 * rng.normal(size=n)
    return make_table(X, y)


def test_importance_ordering():
    data = synthetic()
    f = fit_forest(data, np.arange(data.n), ForestConfig(n_trees=60, mtry=2, seed=3))
    imp = importances(f)
    assert imp["x0"]["pct_inc_mse"] > imp["x1"]["pct_inc_mse"]
    assert imp["x0"]["inc_node_purity"] > imp["x1"]["inc_node_purity"]
    assert imp["x2"] == {"pct_inc_mse": 0.0, "inc_node_purity": 0.0}


def test_oob_metrics_by_hand():
    data = synthetic(80)
    f = fit_forest(data, np.arange(data.n), ForestConfig(n_trees=30, mtry=1, seed=2))
    m = oob_metrics(f)
    preds, counts = np.zeros(data.n), np.zeros(data.n)
    for t in f.trees:
        for i in range(data.n):
            if t.in_bag[i] == 0:
                preds[i] += t.predict(f.X_train[i : i + 1])[0]
                counts[i] += 1
    ok = counts > 0
    mse = np.mean((data.response[ok] - preds[ok] / counts[ok]) ** 2)
    assert m["mse_oob"] == pytest.approx(mse)
    assert m["pct_var_explained"] == pytest.approx(100 * (1 - mse / np.var(data.response)))
    assert m["n_skipped"] == int((~ok).sum())


def test_determinism_and_workers(iris):
    split = split_train_test(iris, 0.7, 210)
    cfg = ForestConfig(n_trees=40, mtry=1, seed=7)
    a = fit_forest(iris, split.train, cfg)
    b = fit_forest(iris, split.train, cfg, n_jobs=2)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())


def test_save_load_round_trip(tmp_path, iris):
    split = split_train_test(iris, 0.7, 1)
    f = fit_forest(iris, split.train, ForestConfig(n_trees=10, mtry=2))
    f.save(tmp_path / "f.json")
    g = Forest.load(tmp_path / "f.json", iris)
    X = iris.matrix()
    np.testing.assert_array_equal(f.predict(X), g.predict(X))
    np.testing.assert_array_equal(f.in_bag_counts(), g.in_bag_counts())


def test_schema_mismatch(tmp_path, iris):
    split = split_train_test(iris, 0.7, 1)
    f = fit_forest(iris, split.train, ForestConfig(n_trees=2))
    f.save(tmp_path / "f.json")
    other = make_table(np.zeros((150, 4)), iris.response)
    with pytest.raises(DataError):
        Forest.load(tmp_path / "f.json", other)


def test_constant_response_rejected():
    data = make_table(np.arange(10.0)[:, None], np.ones(10))
    with pytest.raises(DataError, match="constant"):
        fit_forest(data, np.arange(10))


def test_default_mtry():
    assert ForestConfig().resolved(4).mtry == 1
    assert ForestConfig().resolved(7).mtry == 2
    assert ForestConfig().resolved(2).mtry == 1

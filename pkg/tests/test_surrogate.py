import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from e2tree.cooccurrence import check_pair_matrix, cooccurrence_matrix, dissimilarity
from e2tree.forest import ForestConfig, SplitRule, fit_forest
from e2tree.mannwhitney import mann_whitney_u
from e2tree.surrogate import (
    COMMON_ANCESTOR,
    MANN_WHITNEY,
    MAX_DEPTH,
    MIN_SIZE,
    NMSE_RULE,
    NO_SPLIT,
    STOP_REASONS,
    TERMINAL,
    ZERO_DISSIMILARITY,
    StopConfig,
    _common_ancestor,
    best_split,
    enumerate_splits,
    evaluate_split,
    grow,
    reconstruct_ohat,
    score_all,
)

from conftest import make_table


def test_numeric_midpoints():
    data = make_table([[1.0], [2.0], [3.0], [2.0]], [0, 1, 2, 3])
    assert [r.threshold for r in enumerate_splits(data, range(4))] == [1.5, 2.5]


def test_three_levels_three_subsets():
    data = make_table([[0], [1], [2], [1]], [0, 1, 2, 3], cat=(0,))
    rules = enumerate_splits(data, range(4))
    assert [sorted(r.left_levels) for r in rules] == [[0], [0, 1], [1]]


def test_absent_levels_are_skipped():
    data = make_table([[0], [2], [2], [0]], [0, 1, 2, 3], cat=(0,))
    assert [sorted(r.left_levels) for r in enumerate_splits(data, range(4))] == [[0]]


def test_block_dissimilarity_picks_blocks():
    x = np.array([0.3, 0.1, 0.9, 0.7, 0.2, 0.8])
    block = x > 0.5
    D = (block[:, None] != block[None, :]).astype(float)
    data = make_table(np.column_stack([np.arange(6.0), x]), np.arange(6.0))
    best = best_split(score_all(D, data, np.arange(6)))
    assert best.rule == SplitRule(1, threshold=0.5)
    assert best.score == 0.0


def pair_mean(D, idx):
    pairs = list(itertools.combinations(idx, 2))
    return sum(D[i, j] for i, j in pairs) / len(pairs) if pairs else 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_bulk_scores_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = 8
    X = np.column_stack([rng.integers(0, 5, n), rng.integers(0, 3, n)]).astype(float)
    A = rng.uniform(size=(n, n))
    D = (A + A.T) / 2
    np.fill_diagonal(D, 0)
    data = make_table(X, rng.normal(size=n), cat=(1,))
    rows = np.arange(n)
    got = score_all(D, data, rows)
    rules = enumerate_splits(data, rows)
    assert [c.rule for c in got] == rules
    for c in got:
        left = c.rule.goes_left(np.asarray(data.features[c.feature].values))
        L, R = rows[left], rows[~left]
        ref = (len(L) * pair_mean(D, L) + len(R) * pair_mean(D, R)) / n
        assert c.score == pytest.approx(ref, abs=1e-12)
        assert evaluate_split(D, rows, c.rule, data) == pytest.approx(ref, abs=1e-12)


def test_between_objective_brute_force():
    rng = np.random.default_rng(5)
    n = 8
    A = rng.uniform(size=(n, n))
    D = (A + A.T) / 2
    np.fill_diagonal(D, 0)
    data = make_table(rng.integers(0, 4, (n, 1)).astype(float), rng.normal(size=n))
    for c in score_all(D, data, np.arange(n), "between"):
        left = c.rule.goes_left(data.features[0].values)
        ref = -D[np.ix_(left, ~left)].mean()
        assert c.score == pytest.approx(ref, abs=1e-12)


def random_problem(seed, n=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(15, 60))
    X = np.column_stack([rng.normal(size=n), rng.integers(0, 3, n), rng.uniform(size=n)])
    y = 2 * X[:, 0] + (X[:, 1] == 1) * 1.5 + rng.normal(0, 0.5, n)
    data = make_table(X, y, cat=(1,))
    f = fit_forest(data, np.arange(n), ForestConfig(n_trees=25, mtry=2, min_leaf=3, seed=seed))
    D = dissimilarity(cooccurrence_matrix(f))
    return data, D


def check_sound(tree, data, D, stop):
    y = data.response[tree.row_ids]
    for nd in tree.nodes.values():
        idx = nd.rows
        if nd.terminal:
            assert nd.stop_reason in STOP_REASONS
            r = nd.stop_reason
            if r == MIN_SIZE:
                assert nd.n_t < 2 * stop.min_node
            elif r == MAX_DEPTH:
                assert nd.depth >= stop.max_depth
            elif r == ZERO_DISSIMILARITY:
                assert not D[np.ix_(idx, idx)].any()
            elif r == NO_SPLIT:
                assert enumerate_splits(data, tree.row_ids[idx]) == []
            elif r == NMSE_RULE:
                assert nd.nmse <= stop.gamma
            elif r == MANN_WHITNEY:
                assert nd.mw_p >= stop.alpha
        else:
            assert nd.stop_reason is None
            assert nd.n_t >= 2 * stop.min_node and nd.nmse > stop.gamma and nd.mw_p < stop.alpha
            l, r = tree.nodes[2 * nd.t], tree.nodes[2 * nd.t + 1]
            assert mann_whitney_u(y[l.rows], y[r.rows]).p_two_sided == pytest.approx(nd.mw_p)
            np.testing.assert_array_equal(np.sort(np.concatenate([l.rows, r.rows])), np.sort(idx))
            assert nd.prediction == pytest.approx(y[idx].mean())


@pytest.mark.parametrize("seed", range(50))
def test_stopping_rules_sound(seed):
    data, D = random_problem(seed)
    stop = StopConfig(gamma=0.05, alpha=0.05, min_node=3, max_depth=4)
    tree = grow(D, data, stop=stop)
    check_sound(tree, data, D, stop)
    # heap ids and a partition of the rows
    for t in tree.nodes:
        assert t == 1 or t // 2 in tree.nodes
    term = tree.terminal_of_rows()
    assert sorted(np.concatenate([nd.rows for nd in tree.terminals()]).tolist()) == list(range(data.n))
    np.testing.assert_array_equal(tree.apply(data), term)


@pytest.mark.parametrize("seed", range(10))
def test_infinite_gamma_single_node(seed):
    data, D = random_problem(seed)
    tree = grow(D, data, stop=StopConfig(gamma=np.inf))
    assert list(tree.nodes) == [1]
    assert tree.nodes[1].stop_reason == NMSE_RULE


@pytest.mark.parametrize("seed", range(5))
def test_affine_response_invariance(seed):
    data, D = random_problem(seed, n=40)
    moved = make_table(np.column_stack([c.values for c in data.features]), 3.0 * data.response - 7.0, cat=(1,))
    a, b = grow(D, data), grow(D, moved)
    assert [nd.t for nd in a.preorder()] == [nd.t for nd in b.preorder()]
    for x, z in zip(a.preorder(), b.preorder()):
        assert x.w == pytest.approx(z.w) and x.prediction * 3 - 7 == pytest.approx(z.prediction)


def test_subset_rows_index_d_locally():
    data, D = random_problem(1, n=40)
    rows = np.arange(0, 40, 2)
    tree = grow(D[np.ix_(rows, rows)], data, rows)
    np.testing.assert_array_equal(tree.row_ids, rows)
    np.testing.assert_array_equal(tree.apply(data, rows), tree.terminal_of_rows())


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("rule", [TERMINAL, COMMON_ANCESTOR])
def test_ohat_valid(seed, rule):
    data, D = random_problem(seed)
    tree = grow(D, data, stop=StopConfig(min_node=3))
    Oh = reconstruct_ohat(tree, rule)
    check_pair_matrix(Oh, diagonal=1.0)
    term = tree.terminal_of_rows()
    for i, j in [(0, 1), (2, 5), (3, 4)]:
        if term[i] == term[j]:
            assert Oh[i, j] == tree.nodes[int(term[i])].w
        elif rule == TERMINAL:
            assert Oh[i, j] == 0.0


def test_common_ancestor():
    assert _common_ancestor(4, 5) == 2
    assert _common_ancestor(12, 7) == 3
    assert _common_ancestor(8, 7) == 1
    assert _common_ancestor(13, 6) == 6
    assert _common_ancestor(1, 9) == 1


def test_json_summary():
    data, D = random_problem(3)
    tree = grow(D, data)
    d = json.loads(tree.to_json())
    assert d["n_terminal"] == len(tree.terminals())
    assert sum(len(nd["rows"]) for nd in d["nodes"] if nd["node_type"] == "Terminal") == data.n


def test_bad_stop_config():
    with pytest.raises(ValueError):
        StopConfig(gamma=0)
    with pytest.raises(ValueError):
        StopConfig(alpha=1.5)
    with pytest.raises(ValueError):
        StopConfig(objective="sideways")


def test_d_shape_checked():
    data, D = random_problem(0, n=20)
    with pytest.raises(ValueError):
        grow(D[:5, :5], data)

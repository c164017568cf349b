import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from crashml.cart import GrowConfig, RegressionTree, best_split, grow_tree, predict_tree

from oracles import brute_force_split, sse


def test_numeric_example():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    y = np.array([0.0, 0.0, 10.0, 10.0])
    s = best_split(X, y)
    assert s.feature == 0 and s.threshold == 2.5
    assert s.gain == pytest.approx(100.0)


def test_categorical_example():
    X = np.array([[0.0], [0.0], [1.0], [1.0], [2.0], [2.0]])
    y = np.array([1.0, 1.0, 1.0, 1.0, 11.0, 11.0])
    s = best_split(X, y, categorical=[True])
    assert s.left_levels == (0, 1) and s.right_levels == (2,)
    assert s.gain == pytest.approx(sse(y))


def test_min_leaf_forces_non_contiguous_level_set():
    X = np.array([[0.0], [2.0], [1.0], [1.0]])
    y = np.array([-0.2, 1.3, -0.25, 0.3])
    s = best_split(X, y, categorical=[True], min_leaf=2)
    assert s.left_levels == (0, 2) and s.right_levels == (1,)


def test_tie_prefers_lowest_feature():
    X = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    assert best_split(X, y).feature == 0


def test_constant_response_is_leaf():
    tree = grow_tree(np.arange(10.0)[:, None], np.full(10, 3.0), GrowConfig(min_leaf=1))
    assert tree.n_nodes == 1 and tree.value[0] == 3.0


@given(st.integers(0, 10_000))
def test_best_split_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    n, p = int(rng.integers(2, 15)), int(rng.integers(1, 4))
    X = rng.integers(0, 5, (n, p)).astype(float)
    cat = rng.random(p) < 0.4
    y = rng.normal(size=n)
    ml = int(rng.integers(1, 3))
    got = best_split(X, y, categorical=cat, min_leaf=ml)
    want = brute_force_split(X, y, cat, ml)
    if want is None:
        assert got is None
        return
    f, _, (kind, rule), gain = want
    assert got.feature == f
    assert got.gain == pytest.approx(gain, rel=1e-9, abs=1e-12)
    if kind == "threshold":
        assert got.threshold == pytest.approx(rule)
    else:
        assert got.left_levels == rule


@given(arrays(float, st.tuples(st.integers(5, 40), st.integers(1, 4)),
              elements=st.floats(-100, 100, allow_nan=False)),
       st.integers(1, 4), st.integers(0, 100))
def test_tree_invariants(X, min_leaf, seed):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=X.shape[0])
    tree = grow_tree(X, y, GrowConfig(min_leaf=min_leaf))
    leaves = tree.leaves
    assert tree.n[leaves].sum() == X.shape[0]
    assert np.all(tree.n[leaves] >= min_leaf)
    internal = tree.feature >= 0
    assert np.all(tree.gain[internal] > 0)
    # children partition the parent and gain is the SSE drop
    for i in np.flatnonzero(internal):
        l, r = tree.left[i], tree.right[i]
        assert tree.n[l] + tree.n[r] == tree.n[i]
        assert tree.gain[i] == pytest.approx(tree.sse[i] - tree.sse[l] - tree.sse[r],
                                             rel=1e-7, abs=1e-7)
    # training predictions are leaf means, so the mean is preserved
    assert tree.predict(X).mean() == pytest.approx(y.mean(), abs=1e-9)


def test_max_depth_and_min_gain():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 3))
    y = X[:, 0] + rng.normal(size=200)
    assert grow_tree(X, y, GrowConfig(min_leaf=1, max_depth=2)).depth <= 2
    assert grow_tree(X, y, GrowConfig(max_depth=0)).n_nodes == 1
    assert grow_tree(X, y, GrowConfig(min_gain=1e9)).n_nodes == 1


def test_mtry_needs_rng_and_is_reproducible():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(80, 5))
    y = X @ np.arange(5.0)
    cfg = GrowConfig(mtry=2)
    with pytest.raises(ValueError):
        grow_tree(X, y, cfg)
    a = grow_tree(X, y, cfg, np.random.default_rng(3))
    b = grow_tree(X, y, cfg, np.random.default_rng(3))
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
    with pytest.raises(ValueError):
        grow_tree(X, y, GrowConfig(mtry=6), np.random.default_rng(3))


def test_serialisation_round_trip_and_unseen_level():
    X = np.array([[0.0, 1.0], [1.0, 2.0], [2.0, 3.0], [0.0, 4.0], [1.0, 5.0], [2.0, 6.0]])
    y = np.array([1.0, 5.0, 9.0, 1.5, 5.5, 9.5])
    tree = grow_tree(X, y, GrowConfig(min_leaf=1), categorical=[True, False])
    back = RegressionTree.from_dict(json.loads(json.dumps(tree.to_dict())))
    probe = np.array([[0.0, 3.5], [2.0, 0.0], [5.0, 3.0]])  # level 5 never seen
    assert np.array_equal(back.predict(probe), tree.predict(probe))
    assert np.isfinite(tree.predict(probe)).all()


def test_predict_tree_arity():
    tree = grow_tree(np.arange(6.0)[:, None], np.arange(6.0), GrowConfig(min_leaf=1))
    assert predict_tree(tree, [2.0]) == 2.0
    with pytest.raises(ValueError):
        predict_tree(tree, [1.0, 2.0])

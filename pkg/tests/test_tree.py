import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from relgbdt.tree import (
    FeatureColumn,
    RegressionTree,
    TreeConfig,
    TreeError,
    constant_tree,
    feature_min_depths,
    predict_tree,
    train_tree,
)

FULL = TreeConfig(feature_sampling_ratio=1.0)


def num(name, values):
    return FeatureColumn(name, "numerical", np.asarray(values, dtype=float))


def cat(name, values):
    return FeatureColumn(name, "categorical", values)


def sse(y):
    return float(((y - y.mean()) ** 2).sum()) if len(y) else 0.0


def brute_force_stump(xs, y, min_leaf):
    """Exhaustive scan over every feature and every midpoint; lowest SSE wins,
    ties to the lowest feature index then the lowest threshold."""
    best = (sse(y), None, None)
    for f, x in enumerate(xs):
        vals = np.unique(x)
        for lo, hi in zip(vals[:-1], vals[1:]):
            thr = (lo + hi) / 2
            left = x <= thr
            if left.sum() < min_leaf or (~left).sum() < min_leaf:
                continue
            s = sse(y[left]) + sse(y[~left])
            if s < best[0] - 1e-9 * max(1.0, best[0]):
                best = (s, f, thr)
    return best


def test_step_function_split():
    rng = np.random.default_rng(3)
    x = rng.uniform(size=100)
    y = (x > 0.5).astype(float)
    tree = train_tree([num("x", x)], y, config=FULL)
    assert tree.depth == 1
    assert x[x <= 0.5].max() < tree.threshold[0] <= x[x > 0.5].min()
    pred = tree.predict({"x": x})
    assert np.mean((pred - y) ** 2) == 0.0


def test_constant_targets_single_leaf():
    x = np.arange(20.0)
    tree = train_tree([num("x", x)], np.full(20, 0.3), config=FULL)
    assert tree.n_nodes == 1 and tree.value[0] == 0.3
    assert predict_tree(tree, {"anything": 1.0}) == 0.3


def test_min_leaf_allows_one_split():
    x = np.arange(10.0)
    tree = train_tree([num("x", x)], x ** 2, config=TreeConfig(min_examples_leaf=5, feature_sampling_ratio=1.0))
    assert tree.n_nodes == 3
    assert set(tree.n_examples[tree.feature == -1]) == {5}


def test_zero_examples_rejected():
    with pytest.raises(TreeError):
        train_tree([num("x", [])], np.array([]))


def stump(threshold=0.5, missing_left=True):
    d = {"features": ["x"], "kinds": ["numerical"], "nodes": [
        {"feature": "x", "threshold": threshold, "missing_left": missing_left, "left": 1, "right": 2, "value": 0.5, "n": 10},
        {"leaf": 0.0, "n": 5},
        {"leaf": 1.0, "n": 5},
    ]}
    return RegressionTree.from_dict(d)


def test_predict_examples():
    t = stump()
    assert predict_tree(t, {"x": 0.7}) == 1.0
    assert predict_tree(t, {"x": 0.5}) == 0.0
    assert predict_tree(t, {"x": np.nan}) == 0.0
    assert predict_tree(stump(missing_left=False), {"x": None}) == 1.0
    with pytest.raises(TreeError):
        predict_tree(t, {"y": 0.1})
    with pytest.raises(TreeError):
        t.predict({"y": np.zeros(3)})
    np.testing.assert_array_equal(t.predict({"x": np.array([0.1, 0.9, np.nan])}), [0.0, 1.0, 0.0])


def test_missing_values_go_to_better_side():
    x = np.array([0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0] + [np.nan] * 5)
    y = np.array([0.0] * 5 + [1.0] * 5 + [1.0] * 5)
    tree = train_tree([num("x", x)], y, config=TreeConfig(min_examples_leaf=3, feature_sampling_ratio=1.0))
    assert not tree.missing_left[0]
    np.testing.assert_array_equal(tree.predict({"x": x}), y)
    y2 = np.array([0.0] * 5 + [1.0] * 5 + [0.0] * 5)
    tree2 = train_tree([num("x", x)], y2, config=TreeConfig(min_examples_leaf=3, feature_sampling_ratio=1.0))
    assert tree2.missing_left[0]


def test_categorical_split_and_unseen_category():
    c = np.array(["u", "v", "w", "z"] * 10, dtype=object)
    y = np.where((c == "v") | (c == "z"), 2.0, -1.0)
    tree = train_tree([cat("c", c)], y, config=FULL)
    assert tree.depth == 1
    np.testing.assert_array_equal(tree.predict({"c": c}), y)
    sides = {tree.left_categories[0], tree.right_categories[0]}
    assert sides == {frozenset({"v", "z"}), frozenset({"u", "w"})}
    unseen = predict_tree(tree, {"c": "q"})
    assert unseen == predict_tree(tree, {"c": None})


def test_min_depths():
    assert feature_min_depths(constant_tree(0.3)) == {}
    assert feature_min_depths(stump()) == {"x": 0}
    d = {"features": ["f", "g"], "kinds": ["numerical", "numerical"], "nodes": [
        {"feature": "f", "threshold": 0.0, "missing_left": True, "left": 1, "right": 2, "value": 0, "n": 20},
        {"feature": "g", "threshold": 0.0, "missing_left": True, "left": 3, "right": 4, "value": 0, "n": 10},
        {"feature": "g", "threshold": 1.0, "missing_left": True, "left": 5, "right": 6, "value": 0, "n": 10},
    ] + [{"leaf": 0.0, "n": 5}] * 4}
    assert feature_min_depths(RegressionTree.from_dict(d)) == {"f": 0, "g": 1}


def test_feature_sampling_count():
    assert TreeConfig().n_sampled(5) == 1
    assert TreeConfig().n_sampled(11) == 3
    assert TreeConfig().n_sampled(10) == 2
    assert TreeConfig(feature_sampling_ratio=1.0).n_sampled(7) == 7


def test_serialization_round_trip():
    rng = np.random.default_rng(0)
    cols = [num("a", rng.normal(size=200)), cat("b", rng.choice(list("xyz"), 200))]
    cols[0].values[::7] = np.nan
    y = rng.normal(size=200)
    tree = train_tree(cols, y, config=TreeConfig(feature_sampling_ratio=1.0, min_examples_leaf=3))
    again = RegressionTree.from_dict(tree.to_dict())
    m = {c.name: c.values for c in cols}
    np.testing.assert_array_equal(tree.predict(m), again.predict(m))


data_sets = st.integers(8, 40).flatmap(lambda n: st.tuples(
    arrays(np.float64, (3, n), elements=st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0, 2.0])),
    arrays(np.float64, n, elements=st.floats(-5, 5, allow_nan=False).map(lambda v: round(v, 2))),
    st.integers(1, 4),
))


@settings(max_examples=80, deadline=None)
@given(data_sets)
def test_stump_matches_brute_force(ds):
    xs, y, min_leaf = ds
    cols = [num(f"f{i}", x) for i, x in enumerate(xs)]
    tree = train_tree(cols, y, config=TreeConfig(max_depth=1, min_examples_leaf=min_leaf, feature_sampling_ratio=1.0))
    best_sse, f, thr = brute_force_stump(xs, y, min_leaf)
    pred = tree.predict({c.name: c.values for c in cols}, len(y))
    got = float(((pred - y) ** 2).sum())
    assert got == pytest.approx(best_sse, rel=1e-9, abs=1e-9)
    if f is not None and tree.n_nodes > 1:
        assert tree.features[tree.feature[0]] == f"f{f}"
        assert tree.threshold[0] == thr


@settings(max_examples=60, deadline=None)
@given(data_sets, st.integers(0, 2**32 - 1))
def test_tree_invariants(ds, seed):
    xs, y, min_leaf = ds
    cols = [num(f"f{i}", x) for i, x in enumerate(xs)]
    cfg = TreeConfig(max_depth=3, min_examples_leaf=min_leaf, feature_sampling_ratio=0.5, rng_seed=seed)
    tree = train_tree(cols, y, config=cfg)
    assert tree.depth <= 3
    leaves = tree.feature == -1
    assert (tree.n_examples[leaves] >= min_leaf).all()
    pred = tree.predict({c.name: c.values for c in cols}, len(y))
    mse = np.mean((pred - y) ** 2)
    assert mse <= np.mean((y - y.mean()) ** 2) + 1e-9
    # leaf-mean optimality: each leaf value is the mean of its examples
    for v in np.unique(pred):
        grp = y[pred == v]
        assert sse(grp) <= float(((grp - v) ** 2).sum()) + 1e-9
    # thresholds are midpoints of two observed values (at that node)
    for t in np.flatnonzero(~leaves):
        x = {c.name: c.values for c in cols}[tree.features[tree.feature[t]]]
        vals = np.unique(x)
        assert vals[0] < tree.threshold[t] < vals[-1]
        assert tree.threshold[t] in {(a + b) / 2 for a in vals for b in vals if a < b}
    again = train_tree(cols, y, config=cfg)
    assert again.to_dict() == tree.to_dict()

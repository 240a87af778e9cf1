"""Axis-aligned least-squares regression trees.

Trees are grown greedily (CART) with per-node feature sampling. Numerical
splits test ``x <= threshold``; categorical splits test membership in a set of
categories. Missing values (NaN, ``None``) and categories never seen at a
node follow a per-node missing direction learned at training time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .data import CATEGORICAL, NUMERICAL

LEAF = -1


class TreeError(ValueError):
    pass


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int = 6
    min_examples_leaf: int = 5
    feature_sampling_ratio: float = 0.2
    rng_seed: int = 0

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_examples_leaf < 1:
            raise ValueError("min_examples_leaf must be >= 1")
        if not 0.0 < self.feature_sampling_ratio <= 1.0:
            raise ValueError("feature_sampling_ratio must be in (0, 1]")

    def n_sampled(self, n_features: int) -> int:
        if n_features == 0:
            return 0
        k = math.ceil(self.feature_sampling_ratio * n_features - 1e-9)
        return min(n_features, max(1, k))


@dataclass
class FeatureColumn:
    name: str
    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind == NUMERICAL:
            self.values = np.asarray(self.values, dtype=np.float64)
        elif self.kind == CATEGORICAL:
            vals = np.empty(len(self.values), dtype=object)
            vals[:] = list(self.values)
            self.values = vals
        else:
            raise TreeError(f"unknown feature kind {self.kind!r}")


@dataclass
class RegressionTree:
    """Array-encoded binary tree.

    Node ``t`` is a leaf when ``feature[t] == -1``. Otherwise rows go to
    ``left[t]`` when ``x <= threshold[t]`` (numerical) or when the category
    is in ``left_categories[t]``; rows with a missing value, or a category
    absent from both sides, go left iff ``missing_left[t]``.
    """

    features: tuple[str, ...]
    kinds: tuple[str, ...]
    feature: np.ndarray
    threshold: np.ndarray
    left_categories: list[frozenset | None]
    right_categories: list[frozenset | None]
    missing_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_examples: np.ndarray
    _depths: np.ndarray | None = field(default=None, init=False, repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def node_depths(self) -> np.ndarray:
        if self._depths is None:
            d = np.zeros(self.n_nodes, dtype=np.int64)
            for t in range(self.n_nodes):
                if self.feature[t] != LEAF:
                    d[self.left[t]] = d[t] + 1
                    d[self.right[t]] = d[t] + 1
            self._depths = d
        return self._depths

    @property
    def depth(self) -> int:
        return int(self.node_depths.max())

    def is_leaf(self, t: int) -> bool:
        return self.feature[t] == LEAF

    def _goes_left(self, t: int, x: Any) -> bool:
        if self.kinds[self.feature[t]] == NUMERICAL:
            if x is None or np.isnan(x):
                return bool(self.missing_left[t])
            return bool(x <= self.threshold[t])
        if x in self.left_categories[t]:
            return True
        if x in self.right_categories[t]:
            return False
        return bool(self.missing_left[t])

    def predict(self, columns: Mapping[str, np.ndarray], n_rows: int | None = None) -> np.ndarray:
        """Vectorized prediction. ``columns`` maps feature name to values."""
        for name in self.features:
            if name not in columns:
                raise TreeError(f"feature {name!r} absent from input")
        if n_rows is None:
            n_rows = len(next(iter(columns.values()))) if columns else 0
        if self.n_nodes == 1:
            return np.full(n_rows, self.value[0])
        out = np.empty(n_rows)
        stack = [(0, np.arange(n_rows))]
        while stack:
            t, rows = stack.pop()
            if self.feature[t] == LEAF:
                out[rows] = self.value[t]
                continue
            f = self.feature[t]
            x = columns[self.features[f]][rows]
            if self.kinds[f] == NUMERICAL:
                x = np.asarray(x, dtype=np.float64)
                miss = np.isnan(x)
                go_left = x <= self.threshold[t]
            else:
                lset, rset = self.left_categories[t], self.right_categories[t]
                go_left = np.fromiter((v in lset for v in x), dtype=bool, count=len(x))
                miss = ~go_left & ~np.fromiter((v in rset for v in x), dtype=bool, count=len(x))
            if self.missing_left[t]:
                go_left |= miss
            else:
                go_left &= ~miss
            stack.append((self.right[t], rows[~go_left]))
            stack.append((self.left[t], rows[go_left]))
        return out

    def to_dict(self) -> dict:
        nodes = []
        for t in range(self.n_nodes):
            if self.feature[t] == LEAF:
                nodes.append({"leaf": float(self.value[t]), "n": int(self.n_examples[t])})
                continue
            f = int(self.feature[t])
            node: dict[str, Any] = {
                "feature": self.features[f],
                "missing_left": bool(self.missing_left[t]),
                "left": int(self.left[t]),
                "right": int(self.right[t]),
                "value": float(self.value[t]),
                "n": int(self.n_examples[t]),
            }
            if self.kinds[f] == NUMERICAL:
                node["threshold"] = float(self.threshold[t])
            else:
                node["left_categories"] = sorted(self.left_categories[t])
                node["right_categories"] = sorted(self.right_categories[t])
            nodes.append(node)
        return {"features": list(self.features), "kinds": list(self.kinds), "nodes": nodes}

    @classmethod
    def from_dict(cls, d: Mapping) -> "RegressionTree":
        b = _Builder(tuple(d["features"]), tuple(d["kinds"]))
        index = {name: i for i, name in enumerate(d["features"])}
        for node in d["nodes"]:
            t = b.new_node(node.get("leaf", node.get("value", 0.0)), node["n"])
            if "leaf" in node:
                continue
            f = index[node["feature"]]
            b.feature[t] = f
            b.missing_left[t] = node["missing_left"]
            b.left[t], b.right[t] = node["left"], node["right"]
            if "threshold" in node:
                b.threshold[t] = node["threshold"]
            else:
                b.left_categories[t] = frozenset(node["left_categories"])
                b.right_categories[t] = frozenset(node["right_categories"])
        return b.finish(compact=False)


def predict_tree(tree: RegressionTree, example: Mapping[str, Any]) -> float:
    """Predict a single example given as a feature-name -> value map."""
    t = 0
    while tree.feature[t] != LEAF:
        name = tree.features[tree.feature[t]]
        if name not in example:
            raise TreeError(f"feature {name!r} absent from example")
        t = tree.left[t] if tree._goes_left(t, example[name]) else tree.right[t]
    return float(tree.value[t])


def feature_min_depths(tree: RegressionTree) -> dict[str, int]:
    """Shallowest depth (root = 0) at which each feature is split on."""
    out: dict[str, int] = {}
    depths = tree.node_depths
    for t in range(tree.n_nodes):
        if tree.feature[t] != LEAF:
            name = tree.features[tree.feature[t]]
            d = int(depths[t])
            if name not in out or d < out[name]:
                out[name] = d
    return out


def constant_tree(value: float, n_examples: int = 0) -> RegressionTree:
    b = _Builder((), ())
    b.new_node(value, n_examples)
    return b.finish()


class _Builder:
    def __init__(self, features: tuple[str, ...], kinds: tuple[str, ...]):
        self.features, self.kinds = features, kinds
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left_categories: list[frozenset | None] = []
        self.right_categories: list[frozenset | None] = []
        self.missing_left: list[bool] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.n: list[int] = []

    def new_node(self, value: float, n: int) -> int:
        self.feature.append(LEAF)
        self.threshold.append(np.nan)
        self.left_categories.append(None)
        self.right_categories.append(None)
        self.missing_left.append(False)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(float(value))
        self.n.append(int(n))
        return len(self.feature) - 1

    def finish(self, compact: bool = True) -> RegressionTree:
        features, kinds, feature = self.features, self.kinds, np.asarray(self.feature, dtype=np.int64)
        if compact:
            # keep only the columns the tree actually splits on
            used = sorted({f for f in self.feature if f != LEAF})
            remap = {f: i for i, f in enumerate(used)}
            features = tuple(self.features[f] for f in used)
            kinds = tuple(self.kinds[f] for f in used)
            feature = np.asarray([remap.get(f, LEAF) for f in self.feature], dtype=np.int64)
        return RegressionTree(
            features=features,
            kinds=kinds,
            feature=feature,
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left_categories=list(self.left_categories),
            right_categories=list(self.right_categories),
            missing_left=np.asarray(self.missing_left, dtype=bool),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            value=np.asarray(self.value, dtype=np.float64),
            n_examples=np.asarray(self.n, dtype=np.int64),
        )


@dataclass
class _Split:
    score: float
    feature: int
    threshold: float = np.nan
    left_codes: np.ndarray | None = None
    missing_left: bool = False


def _encode_categorical(values: np.ndarray) -> tuple[np.ndarray, list[str]]:
    present = [v for v in values if v is not None]
    vocab = sorted(set(present))
    index = {v: i for i, v in enumerate(vocab)}
    codes = np.fromiter((-1 if v is None else index[v] for v in values), dtype=np.int64, count=len(values))
    return codes, vocab


def _best_numerical(x, y, w, min_leaf, total_w, total_wy, f) -> _Split | None:
    n = len(x)
    miss = np.isnan(x)
    n_miss = int(miss.sum())
    if n_miss:
        present = ~miss
        xp, yp, wp = x[present], y[present], w[present]
        mw, mwy = float(w[miss].sum()), float((w[miss] * y[miss]).sum())
    else:
        xp, yp, wp = x, y, w
        mw = mwy = 0.0
    n_pres = n - n_miss
    if n_pres == 0:
        return None
    order = np.argsort(xp, kind="stable")
    xs = xp[order]
    cw = np.cumsum(wp[order])
    cwy = np.cumsum(wp[order] * yp[order])
    # candidate i puts the first i present rows on the left
    i = np.flatnonzero(xs[1:] > xs[:-1]) + 1
    thresholds = (xs[i - 1] + xs[i]) / 2.0
    # midpoint may round up onto the larger value
    bad = thresholds >= xs[i]
    thresholds[bad] = xs[i - 1][bad]
    if n_miss:
        i = np.append(i, n_pres)
        thresholds = np.append(thresholds, xs[-1])
    if len(i) == 0:
        return None
    lw, lwy = cw[i - 1], cwy[i - 1]
    best: _Split | None = None
    for missing_left in (True, False) if n_miss else (True,):
        ln = i + (n_miss if missing_left else 0)
        rn = n - ln
        if missing_left:
            lw_, lwy_ = lw + mw, lwy + mwy
        else:
            lw_, lwy_ = lw, lwy
        rw_, rwy_ = total_w - lw_, total_wy - lwy_
        ok = (ln >= min_leaf) & (rn >= min_leaf) & (lw_ > 0) & (rw_ > 0)
        if not ok.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            score = np.where(ok, lwy_ * lwy_ / lw_ + rwy_ * rwy_ / rw_, -np.inf)
        j = int(np.argmax(score))
        s = float(score[j])
        if best is None or s > best.score or (s == best.score and thresholds[j] < best.threshold):
            if not n_miss:
                # no missing at training time: route future missing to the larger side
                missing_left = bool(ln[j] >= rn[j])
            best = _Split(s, f, float(thresholds[j]), None, missing_left)
    return best


def _best_categorical(codes, y, w, min_leaf, total_w, total_wy, f) -> _Split | None:
    n = len(codes)
    miss = codes < 0
    n_miss = int(miss.sum())
    present = ~miss
    if not present.any():
        return None
    cats, inv = np.unique(codes[present], return_inverse=True)
    if len(cats) < 2:
        return None
    wp, yp = w[present], y[present]
    cat_w = np.bincount(inv, weights=wp)
    cat_wy = np.bincount(inv, weights=wp * yp)
    cat_n = np.bincount(inv)
    means = cat_wy / np.where(cat_w > 0, cat_w, 1.0)
    order = np.lexsort((cats, means))
    cw, cwy, cn = np.cumsum(cat_w[order]), np.cumsum(cat_wy[order]), np.cumsum(cat_n[order])
    mw, mwy = float(w[miss].sum()), float((w[miss] * y[miss]).sum())
    best: _Split | None = None
    k = np.arange(1, len(cats))  # first k categories (in mean order) go left
    for missing_left in (True, False) if n_miss else (True,):
        ln = cn[k - 1] + (n_miss if missing_left else 0)
        rn = n - ln
        lw_ = cw[k - 1] + (mw if missing_left else 0.0)
        lwy_ = cwy[k - 1] + (mwy if missing_left else 0.0)
        rw_, rwy_ = total_w - lw_, total_wy - lwy_
        ok = (ln >= min_leaf) & (rn >= min_leaf) & (lw_ > 0) & (rw_ > 0)
        if not ok.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            score = np.where(ok, lwy_ * lwy_ / lw_ + rwy_ * rwy_ / rw_, -np.inf)
        j = int(np.argmax(score))
        s = float(score[j])
        if best is None or s > best.score:
            ml = missing_left if n_miss else bool(ln[j] >= rn[j])
            best = _Split(s, f, np.nan, cats[order[: k[j]]], ml)
    return best


def train_tree(
    features: Sequence[FeatureColumn],
    targets: np.ndarray,
    weights: np.ndarray | None = None,
    config: TreeConfig = TreeConfig(),
    rng: np.random.Generator | None = None,
) -> RegressionTree:
    """Fit a least-squares regression tree.

    At every node ``config.n_sampled(len(features))`` candidate features are
    drawn without replacement from ``rng`` (default: seeded from
    ``config.rng_seed``). Leaves predict the (weighted) mean target. Equal
    gains resolve to the lowest feature index, then the lowest threshold.
    """
    y = np.asarray(targets, dtype=np.float64)
    n = len(y)
    if n == 0:
        raise TreeError("cannot train a tree on zero examples")
    for c in features:
        if len(c.values) != n:
            raise TreeError(f"feature {c.name!r} has {len(c.values)} values, expected {n}")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)

    names = tuple(c.name for c in features)
    kinds = tuple(c.kind for c in features)
    data = []
    vocabs: list[list[str] | None] = []
    for c in features:
        if c.kind == NUMERICAL:
            data.append(c.values)
            vocabs.append(None)
        else:
            codes, vocab = _encode_categorical(c.values)
            data.append(codes)
            vocabs.append(vocab)

    d = len(features)
    k = config.n_sampled(d)
    b = _Builder(names, kinds)
    min_leaf = config.min_examples_leaf

    def leaf_value(rows):
        # centred on the first target so constant groups come out exact
        ref = y[rows[0]]
        return float(ref + (w[rows] * (y[rows] - ref)).sum() / w[rows].sum())

    root = b.new_node(leaf_value(np.arange(n)), n)
    stack = [(root, np.arange(n), 0)]
    while stack:
        t, rows, depth = stack.pop()
        nr = len(rows)
        if depth >= config.max_depth or nr < 2 * min_leaf or k == 0:
            continue
        yr, wr = y[rows], w[rows]
        if yr.max() == yr.min():
            continue
        total_w = float(wr.sum())
        total_wy = float((wr * yr).sum())
        parent_score = total_wy * total_wy / total_w
        candidates = np.sort(rng.choice(d, size=k, replace=False))
        best: _Split | None = None
        for f in candidates:
            xr = data[f][rows]
            if kinds[f] == NUMERICAL:
                s = _best_numerical(xr, yr, wr, min_leaf, total_w, total_wy, int(f))
            else:
                s = _best_categorical(xr, yr, wr, min_leaf, total_w, total_wy, int(f))
            if s is not None and (best is None or s.score > best.score):
                best = s
        if best is None or best.score <= parent_score + 1e-12 * abs(parent_score):
            continue
        xr = data[best.feature][rows]
        if kinds[best.feature] == NUMERICAL:
            miss = np.isnan(xr)
            go_left = xr <= best.threshold
        else:
            miss = xr < 0
            go_left = np.isin(xr, best.left_codes)
        go_left = (go_left & ~miss) | (miss & best.missing_left)
        lrows, rrows = rows[go_left], rows[~go_left]
        b.feature[t] = best.feature
        b.missing_left[t] = best.missing_left
        if kinds[best.feature] == NUMERICAL:
            b.threshold[t] = best.threshold
        else:
            vocab = vocabs[best.feature]
            seen = set(np.unique(xr[~miss]).tolist())
            left_codes = set(best.left_codes.tolist())
            b.left_categories[t] = frozenset(vocab[c] for c in left_codes)
            b.right_categories[t] = frozenset(vocab[c] for c in seen - left_codes)
        lt = b.new_node(leaf_value(lrows), len(lrows))
        rt = b.new_node(leaf_value(rrows), len(rrows))
        b.left[t], b.right[t] = lt, rt
        stack.append((rt, rrows, depth + 1))
        stack.append((lt, lrows, depth + 1))
    return b.finish()

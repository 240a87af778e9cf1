"""Splits, cross-validation and the root / flatten / relational comparison."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .boosting import evaluate, train
from .flatten import collect_categories, flatten, root_features
from .schedule import DEFAULT_COVER_COUNT, build_schedule
from .tree import TreeConfig


def max_workers() -> int:
    try:
        return max(1, int(os.environ.get("RELGBDT_THREADS", "1")))
    except ValueError:
        return 1


def train_test_split(n: int, test_fraction: float = 0.2, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    n_test = int(round(n * test_fraction))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def kfold(n: int, folds: int, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Root-row partitions ``(train, test)``; fold sizes differ by at most one."""
    if not 2 <= folds <= n:
        raise ValueError(f"need 2 <= folds <= {n}")
    perm = np.random.default_rng(seed).permutation(n)
    parts = np.array_split(perm, folds)
    out = []
    for k in range(folds):
        test = np.sort(parts[k])
        train_rows = np.sort(np.concatenate([parts[j] for j in range(folds) if j != k]))
        out.append((train_rows, test))
    return out


def fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(fold,)).generate_state(1)[0])


def cross_validate(schema, instance, folds: int, seed: int = 0, **train_kwargs) -> dict:
    """k-fold CV over root rows. Non-root tables are shared by all folds."""
    splits = kfold(instance.n_rows(schema.root), folds, seed)

    def run(k):
        tr, te = splits[k]
        model = train(schema, instance, seed=fold_seed(seed, k), train_rows=tr, **train_kwargs)
        return evaluate(model, instance, te)

    with ThreadPoolExecutor(max_workers=max_workers()) as pool:
        results = list(pool.map(run, range(folds)))
    name = next(iter(results[0]))
    scores = np.array([r[name] for r in results])
    return {"metric": name, "mean": float(scores.mean()), "std": float(scores.std(ddof=1)) if folds > 1 else 0.0,
            "folds": scores.tolist(), "n": int(sum(r["n"] for r in results))}


@dataclass
class Comparison:
    relational: float
    root_only: float
    flattened: float
    n_flat_features: int
    iterations: int


def compare_methods(
    instance,
    iterations: int = 500,
    shrinkage: float = 0.1,
    tree_config: TreeConfig = TreeConfig(),
    seed: int = 0,
    test_fraction: float = 0.2,
    cover_count: int = DEFAULT_COVER_COUNT,
) -> Comparison:
    """Test metric of relational GBDT, GBDT on root features and GBDT on flattened features."""
    schema = instance.schema
    tr, te = train_test_split(instance.n_rows(schema.root), test_fraction, seed)
    kw = dict(shrinkage=shrinkage, iterations=iterations, tree_config=tree_config, seed=seed, train_rows=tr)
    metric = lambda m, inst: next(iter(evaluate(m, inst, te).values()))

    rel = train(schema, instance, cover_count=cover_count, **kw)
    root_inst = root_features(instance)
    root = train(root_inst.schema, root_inst, **kw)
    schedule = build_schedule(schema, cover_count)
    flat_inst = flatten(instance, schedule, collect_categories(instance))
    flat = train(flat_inst.schema, flat_inst, **kw)
    return Comparison(
        metric(rel, instance),
        metric(root, root_inst),
        metric(flat, flat_inst),
        len(flat_inst.schema.root_table.props),
        iterations,
    )

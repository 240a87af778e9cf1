"""Weak-model input blocks for a schedule node.

For a node ``n`` and a row ``x`` of its table the input is the concatenation

    prop  -- the row's own propositional values
    score -- min / max / mean of the child models' predictions over each
             relation ``e[x]``
    hard  -- for each relation, the child columns of the child row with the
             largest child prediction
    soft  -- for each relation, child numerical values averaged with the child
             predictions as weights

Hard attention forwards the child's own prop columns *and* the child's hard
columns, so a value can be carried up several hops (e.g. a grandchild value
selected at the child, then re-selected at the parent). Empty relations yield
missing values in every attention column.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .data import NUMERICAL, DatasetInstance, Schema
from .schedule import Arc, Schedule
from .tree import FeatureColumn

AGGREGATORS = ("min", "max", "mean")
SOFT_EPS = 1e-12

PARTS = ("prop", "score", "hard", "soft")


@dataclass
class FeatureBlock:
    """Ordered feature columns of one node, over every row of its table."""

    node: str
    n_rows: int
    prop: list[FeatureColumn]
    score: list[FeatureColumn]
    hard: list[FeatureColumn]
    soft: list[FeatureColumn]

    @property
    def columns(self) -> list[FeatureColumn]:
        return self.prop + self.score + self.hard + self.soft

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def width(self) -> int:
        return len(self.prop) + len(self.score) + len(self.hard) + len(self.soft)

    def mapping(self) -> dict[str, np.ndarray]:
        return {c.name: c.values for c in self.columns}

    def subset(self, rows: np.ndarray) -> list[FeatureColumn]:
        return [FeatureColumn(c.name, c.kind, c.values[rows]) for c in self.columns]


# ---------------------------------------------------------------------------
# Array-level aggregation over a compiled relation (indptr, indices).


def _groups(indptr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    counts = np.diff(indptr)
    nonempty = counts > 0
    return counts, nonempty


def aggregate_scores(indptr: np.ndarray, indices: np.ndarray, preds: np.ndarray) -> np.ndarray:
    """``(n_rows, 3)`` array of min, max and mean of ``preds`` per relation set."""
    n = len(indptr) - 1
    out = np.full((n, len(AGGREGATORS)), np.nan)
    counts, nonempty = _groups(indptr)
    if not nonempty.any():
        return out
    vals = preds[indices]
    starts = indptr[:-1][nonempty]
    out[nonempty, 0] = np.minimum.reduceat(vals, starts)
    out[nonempty, 1] = np.maximum.reduceat(vals, starts)
    out[nonempty, 2] = np.add.reduceat(vals, starts) / counts[nonempty]
    return out


def hard_attention_index(indptr: np.ndarray, indices: np.ndarray, preds: np.ndarray) -> np.ndarray:
    """Target row with the largest prediction per relation set, ``-1`` when empty.

    Ties go to the earliest row in target-table order.
    """
    n = len(indptr) - 1
    out = np.full(n, -1, dtype=np.int64)
    counts, nonempty = _groups(indptr)
    if not nonempty.any():
        return out
    group = np.repeat(np.arange(n), counts)
    vals = preds[indices]
    order = np.lexsort((indices, -vals, group))
    out[nonempty] = indices[order[indptr[:-1][nonempty]]]
    return out


def soft_attention(indptr: np.ndarray, indices: np.ndarray, preds: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Prediction-weighted mean of ``values`` per relation set.

    Children whose value is missing are skipped. When the weight sum is
    below ``SOFT_EPS`` in magnitude the plain mean is returned instead.
    """
    n = len(indptr) - 1
    out = np.full(n, np.nan)
    if len(indices) == 0:
        return out
    group = np.repeat(np.arange(n), np.diff(indptr))
    v = values[indices]
    h = preds[indices]
    keep = ~np.isnan(v)
    group, v, h = group[keep], v[keep], h[keep]
    cnt = np.bincount(group, minlength=n)
    num = np.bincount(group, weights=v * h, minlength=n)
    den = np.bincount(group, weights=h, minlength=n)
    total = np.bincount(group, weights=v, minlength=n)
    has = cnt > 0
    safe = has & (np.abs(den) >= SOFT_EPS)
    fallback = has & ~safe
    out[safe] = num[safe] / den[safe]
    out[fallback] = total[fallback] / cnt[fallback]
    return out


def _take(values: np.ndarray, idx: np.ndarray, kind: str) -> np.ndarray:
    if kind == NUMERICAL:
        out = np.full(len(idx), np.nan)
    else:
        out = np.empty(len(idx), dtype=object)
        out[:] = None
    has = idx >= 0
    out[has] = values[idx[has]]
    return out


# ---------------------------------------------------------------------------
# Node-level blocks


def compute_b_prop(schedule: Schedule, node: str, instance: DatasetInstance) -> list[FeatureColumn]:
    table = schedule.table_of(node)
    tdef = instance.schema.table(table)
    data = instance.table(table)
    return [FeatureColumn(f"prop:{a.name}", a.kind, data.props[a.name]) for a in tdef.props]


def _arc_csr(schedule: Schedule, arc: Arc, instance: DatasetInstance):
    return instance.relation_csr(schedule.table_of(arc.parent), arc.relation)


def compute_b_score(
    schedule: Schedule, node: str, instance: DatasetInstance, child_preds: Mapping[str, np.ndarray]
) -> list[FeatureColumn]:
    cols = []
    for arc in schedule.child_arcs(node):
        indptr, indices = _arc_csr(schedule, arc, instance)
        agg = aggregate_scores(indptr, indices, np.asarray(child_preds[arc.child], dtype=np.float64))
        for j, phi in enumerate(AGGREGATORS):
            cols.append(FeatureColumn(f"score:{arc.relation}:{phi}", NUMERICAL, agg[:, j]))
    return cols


def _child_sources(
    schedule: Schedule, arc: Arc, instance: DatasetInstance, child_blocks: Mapping[str, FeatureBlock] | None
) -> list[tuple[str, str, np.ndarray]]:
    """Columns a parent can attend to through ``arc``: child props, then child hard columns."""
    if child_blocks is not None and arc.child in child_blocks:
        block = child_blocks[arc.child]
        src = [(c.name[len("prop:"):], c.kind, c.values) for c in block.prop]
        src += [(c.name, c.kind, c.values) for c in block.hard]
        return src
    table = schedule.table_of(arc.child)
    data = instance.table(table)
    return [(a.name, a.kind, data.props[a.name]) for a in instance.schema.table(table).props]


def compute_b_hard(
    schedule: Schedule,
    node: str,
    instance: DatasetInstance,
    child_preds: Mapping[str, np.ndarray],
    child_blocks: Mapping[str, FeatureBlock] | None = None,
) -> list[FeatureColumn]:
    """Hard attention columns ``hard:<relation>:<child column>``.

    Without ``child_blocks`` only the child table's own attributes are
    attended; with them, the child's hard columns are forwarded as well.
    """
    cols = []
    for arc in schedule.child_arcs(node):
        indptr, indices = _arc_csr(schedule, arc, instance)
        sel = hard_attention_index(indptr, indices, np.asarray(child_preds[arc.child], dtype=np.float64))
        for name, kind, values in _child_sources(schedule, arc, instance, child_blocks):
            cols.append(FeatureColumn(f"hard:{arc.relation}:{name}", kind, _take(values, sel, kind)))
    return cols


def compute_b_soft(
    schedule: Schedule, node: str, instance: DatasetInstance, child_preds: Mapping[str, np.ndarray]
) -> list[FeatureColumn]:
    cols = []
    for arc in schedule.child_arcs(node):
        indptr, indices = _arc_csr(schedule, arc, instance)
        preds = np.asarray(child_preds[arc.child], dtype=np.float64)
        table = schedule.table_of(arc.child)
        data = instance.table(table)
        for a in instance.schema.table(table).props:
            if a.kind != NUMERICAL:
                continue
            cols.append(
                FeatureColumn(f"soft:{arc.relation}:{a.name}", NUMERICAL, soft_attention(indptr, indices, preds, data.props[a.name]))
            )
    return cols


def assemble_b(
    schedule: Schedule,
    node: str,
    instance: DatasetInstance,
    child_preds: Mapping[str, np.ndarray] | None = None,
    child_blocks: Mapping[str, FeatureBlock] | None = None,
) -> FeatureBlock:
    """Full input block of ``node``; schedule leaves get their prop columns only."""
    n = instance.n_rows(schedule.table_of(node))
    prop = compute_b_prop(schedule, node, instance)
    if schedule.is_leaf(node):
        return FeatureBlock(node, n, prop, [], [], [])
    if child_preds is None:
        raise ValueError(f"node {node!r} has children; child predictions are required")
    return FeatureBlock(
        node,
        n,
        prop,
        compute_b_score(schedule, node, instance, child_preds),
        compute_b_hard(schedule, node, instance, child_preds, child_blocks),
        compute_b_soft(schedule, node, instance, child_preds),
    )


def prop_block(schedule: Schedule, node: str, instance: DatasetInstance) -> FeatureBlock:
    n = instance.n_rows(schedule.table_of(node))
    return FeatureBlock(node, n, compute_b_prop(schedule, node, instance), [], [], [])


def block_names(schedule: Schedule, node: str, schema: Schema) -> dict[str, list[str]]:
    """Column names per part, derived from the schema alone."""
    tdef = schema.table(schedule.table_of(node))
    names: dict[str, list[str]] = {"prop": [f"prop:{a.name}" for a in tdef.props], "score": [], "hard": [], "soft": []}
    for arc in schedule.child_arcs(node):
        child = schema.table(schedule.table_of(arc.child))
        names["score"] += [f"score:{arc.relation}:{phi}" for phi in AGGREGATORS]
        names["hard"] += [f"hard:{arc.relation}:{a.name}" for a in child.props]
        names["hard"] += [f"hard:{arc.relation}:{h}" for h in block_names(schedule, arc.child, schema)["hard"]]
        names["soft"] += [f"soft:{arc.relation}:{a.name}" for a in child.props if a.kind == NUMERICAL]
    return names


def block_width(schedule: Schedule, node: str, schema: Schema) -> dict[str, int]:
    return {part: len(cols) for part, cols in block_names(schedule, node, schema).items()}

"""Propositionalization baseline.

Collapses a relational instance into a single root-level table by walking the
schedule bottom-up. Through every arc, numerical child columns are averaged
over the related rows and categorical child columns become one frequency
column per category. Propagated columns are named by relation path, e.g.
``r/r''/p'':mean`` or ``r/word:freq=the``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .data import CATEGORICAL, NUMERICAL, Attribute, DatasetInstance, Schema, TableData, TableDef
from .schedule import Schedule, topological_order

Vocabulary = Mapping[tuple[str, str], list[str]]


@dataclass
class _Col:
    path: tuple[str, ...]
    base: str
    suffix: str
    kind: str
    values: np.ndarray

    @property
    def name(self) -> str:
        return "/".join(self.path + (self.base,)) + self.suffix


def collect_categories(instance: DatasetInstance) -> dict[tuple[str, str], list[str]]:
    """Sorted observed categories of every categorical attribute."""
    out = {}
    for tdef in instance.schema.tables:
        for a in tdef.props:
            if a.kind == CATEGORICAL:
                vals = instance.table(tdef.name).props[a.name]
                out[(tdef.name, a.name)] = sorted({v for v in vals if v is not None})
    return out


def _mean_over(indptr, indices, values, n) -> np.ndarray:
    group = np.repeat(np.arange(n), np.diff(indptr))
    v = values[indices]
    keep = ~np.isnan(v)
    cnt = np.bincount(group[keep], minlength=n)
    tot = np.bincount(group[keep], weights=v[keep], minlength=n)
    out = np.full(n, np.nan)
    has = cnt > 0
    out[has] = tot[has] / cnt[has]
    return out


def _freq_over(indptr, indices, values, category, n) -> np.ndarray:
    counts = np.diff(indptr)
    group = np.repeat(np.arange(n), counts)
    hit = np.fromiter((v == category for v in values[indices]), dtype=bool, count=len(indices))
    num = np.bincount(group[hit], minlength=n).astype(np.float64)
    out = np.zeros(n)
    has = counts > 0
    out[has] = num[has] / counts[has]
    return out


def flatten(
    instance: DatasetInstance,
    schedule: Schedule,
    categories: Vocabulary | None = None,
) -> DatasetInstance:
    """Single-table instance with the root's rows, props, label and aggregated child columns.

    ``categories`` fixes the category vocabularies (default: those observed
    in ``instance``); pass the training vocabulary when flattening test data.
    """
    if categories is None:
        categories = collect_categories(instance)
    schema = instance.schema
    cols: dict[str, list[_Col]] = {}
    for nid in reversed(topological_order(schedule)):
        table = schedule.table_of(nid)
        data = instance.table(table)
        n = len(data.ids)
        own = [_Col((), a.name, "", a.kind, data.props[a.name]) for a in schema.table(table).props]
        out = list(own)
        for arc in schedule.child_arcs(nid):
            indptr, indices = instance.relation_csr(table, arc.relation)
            child_table = schedule.table_of(arc.child)
            for c in cols[arc.child]:
                path = (arc.relation,) + c.path
                if c.kind == NUMERICAL:
                    values = _mean_over(indptr, indices, c.values, n)
                    if c.suffix.startswith(":freq="):
                        values[np.diff(indptr) == 0] = 0.0
                    out.append(_Col(path, c.base, c.suffix or ":mean", NUMERICAL, values))
                else:
                    for cat in categories.get((child_table, c.base), []):
                        out.append(_Col(path, c.base, f":freq={cat}", NUMERICAL, _freq_over(indptr, indices, c.values, cat, n)))
        cols[nid] = out

    root = schema.root_table
    root_cols = cols[schedule.root]
    props = tuple(Attribute(c.name, c.kind) for c in root_cols)
    names = [c.name for c in root_cols]
    if len(set(names)) != len(names):
        raise ValueError("flattened column names collide")
    flat_schema = Schema((TableDef(root.name, props, (), root.label),), root.name)
    data = instance.table(root.name)
    flat = TableData(root.name, data.ids, {c.name: c.values for c in root_cols}, {}, data.labels)
    return DatasetInstance(flat_schema, {root.name: flat})


def root_features(instance: DatasetInstance) -> DatasetInstance:
    """The root table alone, relations dropped."""
    schema = instance.schema
    root = schema.root_table
    flat_schema = Schema((TableDef(root.name, root.props, (), root.label),), root.name)
    data = instance.table(root.name)
    return DatasetInstance(flat_schema, {root.name: TableData(root.name, data.ids, dict(data.props), {}, data.labels)})

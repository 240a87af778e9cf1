"""Minimal-depth variable importance per schedule node.

For a column of a node's input block, take its shallowest split depth in
every backward tree of that node that uses it, average those depths, and map
the mean ``d`` to ``(max_depth + 1 - d) / (max_depth + 1)``: 1 for a column
that always splits at the root, 0 for a column no tree uses.
"""

from __future__ import annotations

import csv
import io

import numpy as np

from .attention import PARTS, block_names
from .boosting import StrongModel
from .data import Schema
from .tree import feature_min_depths


def node_columns(model: StrongModel, node: str, schema: Schema | None = None) -> list[str]:
    """Column names of ``node``'s input block, as seen by its backward trees."""
    if schema is not None:
        names = block_names(model.schedule, node, schema)
        return [c for part in PARTS for c in names[part]]
    seen: dict[str, None] = {}
    for tree in model.backward_trees(node):
        seen.update(dict.fromkeys(tree.features))
    return list(seen)


def variable_importance(model: StrongModel, node: str, schema: Schema | None = None) -> dict[str, float]:
    """Importance in [0, 1] of every column of ``node``.

    Without ``schema`` only columns that appear in at least one tree are
    listed (the others would score 0).
    """
    if node not in {n.id for n in model.schedule.nodes}:
        raise KeyError(f"unknown schedule node {node!r}")
    depths: dict[str, list[int]] = {}
    for tree in model.backward_trees(node):
        for name, d in feature_min_depths(tree).items():
            depths.setdefault(name, []).append(d)
    scale = model.tree_config.max_depth + 1
    out = {name: 0.0 for name in node_columns(model, node, schema)}
    for name, ds in depths.items():
        out[name] = (scale - float(np.mean(ds))) / scale
    return out


def ranked(importances: dict[str, float]) -> list[tuple[str, float]]:
    return sorted(importances.items(), key=lambda kv: (-kv[1], kv[0]))


def importance_report(model: StrongModel, schema: Schema | None = None) -> dict[str, list[tuple[str, float]]]:
    """Per schedule node, used columns sorted by importance (descending, ties by name)."""
    report = {}
    for n in model.schedule.nodes:
        imp = variable_importance(model, n.id, schema)
        report[n.id] = [(c, v) for c, v in ranked(imp) if v > 0 or schema is not None]
    return report


def report_csv(report: dict[str, list[tuple[str, float]]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["node", "column", "importance"])
    for node, rows in report.items():
        for col, v in rows:
            w.writerow([node, col, repr(float(v))])
    return buf.getvalue()

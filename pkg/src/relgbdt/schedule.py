"""Schedules: rooted acyclic graphs of table nodes along which boosting flows.

A schema without directed circuits is its own schedule: one node per
reachable table. A schema with circuits is unrolled depth-first from the root
table into a tree: every relational attribute of a node's table yields one
child node, unless the child's table already occurs ``cover_count`` times on
the root path, in which case the arc is pruned.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

from .data import DatasetInstance, Schema, relation_rows

logger = logging.getLogger(__name__)

DEFAULT_COVER_COUNT = 3


@dataclass(frozen=True)
class Node:
    id: str
    table: str


@dataclass(frozen=True)
class Arc:
    parent: str
    child: str
    relation: str


@dataclass(frozen=True)
class Schedule:
    nodes: tuple[Node, ...]
    arcs: tuple[Arc, ...]
    root: str
    cover_count: int = DEFAULT_COVER_COUNT
    _by_id: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        self._by_id.update({n.id: n for n in self.nodes})

    def node(self, node_id: str) -> Node:
        return self._by_id[node_id]

    def table_of(self, node_id: str) -> str:
        return self._by_id[node_id].table

    def child_arcs(self, node_id: str) -> list[Arc]:
        return [a for a in self.arcs if a.parent == node_id]

    def parent_arcs(self, node_id: str) -> list[Arc]:
        return [a for a in self.arcs if a.child == node_id]

    def is_leaf(self, node_id: str) -> bool:
        return not self.child_arcs(node_id)

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "cover_count": self.cover_count,
            "nodes": [{"id": n.id, "table": n.table} for n in self.nodes],
            "arcs": [{"parent": a.parent, "child": a.child, "relation": a.relation} for a in self.arcs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        return cls(
            tuple(Node(n["id"], n["table"]) for n in d["nodes"]),
            tuple(Arc(a["parent"], a["child"], a["relation"]) for a in d["arcs"]),
            d["root"],
            d["cover_count"],
        )

    def render(self) -> str:
        """Text tree, one ``node_id : table (via relation)`` line per node."""
        lines = []

        def visit(node_id: str, depth: int, via: str | None):
            suffix = f" (via {via})" if via else ""
            lines.append(f"{'  ' * depth}{node_id} : {self.table_of(node_id)}{suffix}")
            for arc in self.child_arcs(node_id):
                visit(arc.child, depth + 1, arc.relation)

        visit(self.root, 0, None)
        return "\n".join(lines)


def _has_circuit(schema: Schema) -> bool:
    state: dict[str, int] = {}

    def visit(t: str) -> bool:
        state[t] = 1
        for rel in schema.table(t).rels:
            s = state.get(rel.target, 0)
            if s == 1 or (s == 0 and visit(rel.target)):
                return True
        state[t] = 2
        return False

    return visit(schema.root)


def build_schedule(schema: Schema, cover_count: int = DEFAULT_COVER_COUNT) -> Schedule:
    """Schedule over the tables reachable from the root.

    Without a circuit the schedule is the schema itself (one node per table,
    one arc per relation; a table targeted by several relations gets several
    parents). With a circuit the schema is unrolled depth-first as a tree,
    pruning arcs that would put a table on the root path more than
    ``cover_count`` times.
    """
    if cover_count < 1:
        raise ValueError("cover_count must be a positive integer")
    nodes: list[Node] = []
    arcs: list[Arc] = []

    if not _has_circuit(schema):
        node_of: dict[str, str] = {}

        def walk(node_id: str, table: str):
            node_of[table] = node_id
            nodes.append(Node(node_id, table))
            for rel in schema.table(table).rels:
                if rel.target not in node_of:
                    walk(f"{node_id}/{rel.name}", rel.target)

        walk(schema.root, schema.root)
        for n in nodes:
            for rel in schema.table(n.table).rels:
                arcs.append(Arc(n.id, node_of[rel.target], rel.name))
    else:

        def expand(node_id: str, table: str, path: Counter):
            nodes.append(Node(node_id, table))
            for rel in schema.table(table).rels:
                if path[rel.target] >= cover_count:
                    continue
                child_id = f"{node_id}/{rel.name}"
                arcs.append(Arc(node_id, child_id, rel.name))
                path[rel.target] += 1
                expand(child_id, rel.target, path)
                path[rel.target] -= 1

        expand(schema.root, schema.root, Counter({schema.root: 1}))

    reached = {n.table for n in nodes}
    for t in schema.tables:
        if t.name not in reached:
            logger.warning("table %r is unreachable from the root and is left out of the schedule", t.name)
    return Schedule(tuple(nodes), tuple(arcs), schema.root, cover_count)


def topological_order(schedule: Schedule) -> list[str]:
    """Root first, parents before children; ties follow node declaration order."""
    indegree = {n.id: 0 for n in schedule.nodes}
    children: dict[str, list[str]] = {n.id: [] for n in schedule.nodes}
    for a in schedule.arcs:
        indegree[a.child] += 1
        children[a.parent].append(a.child)
    position = {n.id: i for i, n in enumerate(schedule.nodes)}
    ready = sorted((nid for nid, d in indegree.items() if d == 0), key=position.__getitem__)
    order = []
    while ready:
        nid = ready.pop(0)
        order.append(nid)
        for c in children[nid]:
            indegree[c] -= 1
            if indegree[c] == 0:
                ready.append(c)
        ready.sort(key=position.__getitem__)
    if len(order) != len(schedule.nodes):
        raise ValueError("schedule contains a cycle")
    return order


def instance_relation_rows(schedule: Schedule, arc: Arc, instance: DatasetInstance, row: str) -> list[str]:
    return relation_rows(instance, schedule.table_of(arc.parent), arc.relation, row)

"""Synthetic four-table benchmark with a label hidden two hops away.

Tables ``A -r-> B -r''-> C -r'''-> A`` and ``A -r'-> D``, one uniform [0, 1]
attribute each. Every A row gets 0-3 fresh B and D rows, every B row 0-3
fresh C rows, and every C row points back to one random A row. An A row is
positive iff some grandchild C (through B) has ``p'' >= p``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import (
    BINARY,
    REGRESSION,
    Attribute,
    DatasetInstance,
    Label,
    Relation,
    Schema,
    TableData,
    TableDef,
)

DEFAULT_N_A = 7168


@dataclass(frozen=True)
class SynthConfig:
    n_a: int = DEFAULT_N_A
    seed: int = 0
    regression: bool = False

    def __post_init__(self):
        if self.n_a < 1:
            raise ValueError("n_a must be >= 1")


def synthetic_schema(regression: bool = False) -> Schema:
    task = REGRESSION if regression else BINARY
    return Schema(
        (
            TableDef("A", (Attribute("p"),), (Relation("r", "B"), Relation("r'", "D")), Label("l", task)),
            TableDef("B", (Attribute("p'"),), (Relation("r''", "C"),)),
            TableDef("C", (Attribute("p''"),), (Relation("r'''", "A"),)),
            TableDef("D", (Attribute("p'''"),)),
        ),
        "A",
    )


def _children(counts: np.ndarray, prefix: str) -> tuple[tuple[str, ...], ...]:
    ends = np.cumsum(counts)
    return tuple(tuple(f"{prefix}{j}" for j in range(e - c, e)) for c, e in zip(counts.tolist(), ends.tolist()))


def generate(config: SynthConfig = SynthConfig()) -> DatasetInstance:
    rng = np.random.default_rng(config.seed)
    n_a = config.n_a
    p_a = rng.uniform(0.0, 1.0, n_a)
    n_b_per_a = rng.integers(0, 4, n_a)
    n_d_per_a = rng.integers(0, 4, n_a)
    n_b = int(n_b_per_a.sum())
    p_b = rng.uniform(0.0, 1.0, n_b)
    n_c_per_b = rng.integers(0, 4, n_b)
    n_c = int(n_c_per_b.sum())
    p_c = rng.uniform(0.0, 1.0, n_c)
    back = rng.integers(0, n_a, n_c)
    n_d = int(n_d_per_a.sum())
    p_d = rng.uniform(0.0, 1.0, n_d)

    # best grandchild value per A row
    b_owner = np.repeat(np.arange(n_a), n_b_per_a)
    c_owner = b_owner[np.repeat(np.arange(n_b), n_c_per_b)]
    best = np.full(n_a, -np.inf)
    np.maximum.at(best, c_owner, p_c)
    if config.regression:
        labels = np.where(np.isfinite(best), best, 0.0) - p_a
    else:
        labels = (p_a <= best).astype(np.float64)

    a_ids = tuple(f"a{i}" for i in range(n_a))
    tables = {
        "A": TableData(
            "A",
            a_ids,
            {"p": p_a},
            {"r": _children(n_b_per_a, "b"), "r'": _children(n_d_per_a, "d")},
            labels,
        ),
        "B": TableData("B", tuple(f"b{i}" for i in range(n_b)), {"p'": p_b}, {"r''": _children(n_c_per_b, "c")}),
        "C": TableData("C", tuple(f"c{i}" for i in range(n_c)), {"p''": p_c}, {"r'''": tuple((a_ids[j],) for j in back)}),
        "D": TableData("D", tuple(f"d{i}" for i in range(n_d)), {"p'''": p_d}, {}),
    }
    return DatasetInstance(synthetic_schema(config.regression), tables)


def label_rule(instance: DatasetInstance, row: str) -> int:
    """1 iff some C row reachable as ``r''[r[row]]`` has ``p''`` >= the row's ``p``."""
    a = instance.table("A")
    i = instance.row_index("A")[row]
    b_index = instance.row_index("B")
    c_index = instance.row_index("C")
    b, c = instance.table("B"), instance.table("C")
    for bid in a.rels["r"][i]:
        for cid in b.rels["r''"][b_index[bid]]:
            if a.props["p"][i] <= c.props["p''"][c_index[cid]]:
                return 1
    return 0


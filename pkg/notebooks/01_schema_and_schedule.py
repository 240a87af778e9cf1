"""
Schemas, instances and schedules
================================

A four-table schema with a circuit A -> B -> C -> A, a tiny instance over it,
and the schedule that unrolls the circuit a bounded number of times.
"""

import json

import numpy as np

from relgbdt.data import load_instance, parse_schema, relation_rows, validate_instance
from relgbdt.schedule import build_schedule, topological_order

schema = parse_schema(json.dumps({
    "tables": [
        {"name": "A", "props": [{"name": "p"}],
         "rels": [{"name": "r", "target": "B"}, {"name": "r'", "target": "D"}],
         "label": {"name": "l", "task": "binary"}},
        {"name": "B", "props": [{"name": "p'"}], "rels": [{"name": "r''", "target": "C"}]},
        {"name": "C", "props": [{"name": "p''"}], "rels": [{"name": "r'''", "target": "A"}]},
        {"name": "D", "props": [{"name": "p'''"}], "rels": []},
    ],
    "root": "A",
}))

# rows are plain dicts, relations are ";"-separated id lists
instance = load_instance(schema, {
    "A": [{"id": "a_0", "p": ".1", "r": "b_0", "r'": "", "l": "0"},
          {"id": "a_1", "p": ".2", "r": "b_0;b_1", "r'": "d_0", "l": "1"}],
    "B": [{"id": "b_0", "p'": ".3", "r''": "c_0;c_1"}, {"id": "b_1", "p'": ".4", "r''": ""}],
    "C": [{"id": "c_0", "p''": ".5", "r'''": "a_1"}, {"id": "c_1", "p''": ".6", "r'''": ""}],
    "D": [{"id": "d_0", "p'''": ".7"}],
})
print(validate_instance(schema, instance))
print("a_1 via r :", relation_rows(instance, "A", "r", "a_1"))

# relation sets are stored as CSR arrays
indptr, indices = instance.relation_csr("A", "r")
print("CSR indptr", indptr, "indices", indices)

# %% Unrolling the circuit
for cover in (1, 2):
    s = build_schedule(schema, cover)
    print(f"\ncover_count={cover}: {len(s.nodes)} nodes")
    for nid in topological_order(s):
        print("  ", nid, "->", s.table_of(nid))

# each table appears at most cover_count times on any root path
s = build_schedule(schema, 2)
depth = np.array([nid.count("/") for nid in topological_order(s)])
print("node depths", depth)

"""
Feature blocks and attention
============================

What a node's weak learner sees: its own props, min/max/mean of the child
predictions, the props of the best-scoring child (hard attention) and the
prediction-weighted mean of child props (soft attention).
"""

import json

import numpy as np

from relgbdt.attention import assemble_b, block_width, soft_attention
from relgbdt.data import load_instance, parse_schema
from relgbdt.schedule import build_schedule

schema = parse_schema(json.dumps({
    "tables": [
        {"name": "A", "props": [{"name": "p"}],
         "rels": [{"name": "r", "target": "B"}, {"name": "r'", "target": "D"}],
         "label": {"name": "l", "task": "binary"}},
        {"name": "B", "props": [{"name": "p'"}], "rels": [{"name": "r''", "target": "C"}]},
        {"name": "C", "props": [{"name": "p''"}], "rels": []},
        {"name": "D", "props": [{"name": "p'''"}], "rels": []},
    ],
    "root": "A",
}))
instance = load_instance(schema, {
    "A": [{"id": "a_0", "p": ".1", "r": "b_0", "r'": "", "l": "0"},
          {"id": "a_1", "p": ".2", "r": "b_0;b_1", "r'": "d_0", "l": "1"}],
    "B": [{"id": "b_0", "p'": ".3", "r''": "c_0;c_1"}, {"id": "b_1", "p'": ".4", "r''": ""}],
    "C": [{"id": "c_0", "p''": ".5"}, {"id": "c_1", "p''": ".6"}],
    "D": [{"id": "d_0", "p'''": ".7"}],
})
s = build_schedule(schema)

# %% Block on B, with hand-picked predictions for the two C rows
block = assemble_b(s, "A/r", instance, {"A/r/r''": np.array([0.2, 0.8])})
for name, col in block.mapping().items():
    print(f"{name:18s}", col)
# b_0 sees c_0 and c_1: (0.5 * 0.2 + 0.6 * 0.8) / (0.2 + 0.8) = 0.58, b_1 has no children -> nan

# %% Root block: hard attention forwards the child's own hard columns upwards
b_block = block
block = assemble_b(s, "A", instance, {"A/r": np.array([0.2, 0.8]), "A/r'": np.array([0.4])},
                   child_blocks={"A/r": b_block})
print()
for name, col in block.mapping().items():
    print(f"{name:24s}", col)
print("widths", block_width(s, "A", schema))

# %% Soft attention on raw CSR arrays; a zero weight sum falls back to the plain mean
indptr, indices = np.array([0, 2]), np.array([0, 1])
print(soft_attention(indptr, indices, np.array([0.5, -0.5]), np.array([0.3, 0.9])))

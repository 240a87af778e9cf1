import json

import numpy as np
import pytest

from relgbdt.data import load_instance, parse_schema

CYCLE_SCHEMA = {
    "tables": [
        {"name": "A", "props": [{"name": "p", "kind": "numerical"}],
         "rels": [{"name": "r", "target": "B"}, {"name": "r'", "target": "D"}],
         "label": {"name": "l", "task": "binary"}},
        {"name": "B", "props": [{"name": "p'", "kind": "numerical"}], "rels": [{"name": "r''", "target": "C"}]},
        {"name": "C", "props": [{"name": "p''", "kind": "numerical"}], "rels": [{"name": "r'''", "target": "A"}]},
        {"name": "D", "props": [{"name": "p'''", "kind": "numerical"}], "rels": []},
    ],
    "root": "A",
}

TOY_ROWS = {
    "A": [
        {"id": "a_0", "p": ".1", "r": "b_0", "r'": "", "l": "0"},
        {"id": "a_1", "p": ".2", "r": "b_0;b_1", "r'": "d_0", "l": "1"},
    ],
    "B": [
        {"id": "b_0", "p'": ".3", "r''": "c_0;c_1"},
        {"id": "b_1", "p'": ".4", "r''": ""},
    ],
    "C": [
        {"id": "c_0", "p''": ".5", "r'''": "a_1"},
        {"id": "c_1", "p''": ".6", "r'''": ""},
    ],
    "D": [{"id": "d_0", "p'''": ".7"}],
}


@pytest.fixture
def cycle_text():
    return json.dumps(CYCLE_SCHEMA)


@pytest.fixture
def cycle_schema(cycle_text):
    return parse_schema(cycle_text)


@pytest.fixture
def toy(cycle_schema):
    return load_instance(cycle_schema, TOY_ROWS)


def tabular_rows(n, seed=0, task="regression"):
    """Single-table dataset with two numerical and one categorical column."""
    rng = np.random.default_rng(seed)
    x1, x2 = rng.uniform(size=n), rng.normal(size=n)
    cat = rng.choice(["u", "v", "w"], size=n)
    signal = np.sin(3 * x1) + 0.5 * x2 + (cat == "v")
    if task == "binary":
        y = (signal + 0.3 * rng.normal(size=n) > np.median(signal)).astype(int)
    else:
        y = signal + 0.1 * rng.normal(size=n)
    schema = parse_schema(json.dumps({
        "tables": [{"name": "T", "props": [{"name": "x1", "kind": "numerical"}, {"name": "x2", "kind": "numerical"},
                                           {"name": "c", "kind": "categorical"}],
                    "rels": [], "label": {"name": "y", "task": task}}],
        "root": "T",
    }))
    rows = [{"id": f"t{i}", "x1": x1[i], "x2": x2[i], "c": cat[i], "y": y[i]} for i in range(n)]
    return schema, load_instance(schema, {"T": rows})

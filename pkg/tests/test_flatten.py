import json
import math

import numpy as np
from hypothesis import given, settings, strategies as st

from conftest import CYCLE_SCHEMA, tabular_rows
from relgbdt.data import load_instance, parse_schema, relation_rows
from relgbdt.flatten import collect_categories, flatten, root_features
from relgbdt.schedule import build_schedule
from relgbdt.synthetic import SynthConfig, generate


def test_toy_means(toy):
    flat = flatten(toy, build_schedule(toy.schema))
    t = flat.table("A")
    assert t.props["r/p':mean"][1] == 0.35
    assert t.props["r/p':mean"][0] == 0.3
    assert math.isnan(t.props["r'/p''':mean"][0])
    assert t.props["r'/p''':mean"][1] == 0.7
    # a_0 -> b_0 -> {c_0, c_1}: the mean of per-b means is (0.5 + 0.6) / 2
    assert t.props["r/r''/p'':mean"][0] == (0.5 + 0.6) / 2
    np.testing.assert_array_equal(t.props["p"], [0.1, 0.2])
    np.testing.assert_array_equal(t.labels, toy.table("A").labels)
    assert len(flat.schema.tables) == 1 and not flat.schema.tables[0].rels


def test_single_table_identity():
    schema, inst = tabular_rows(20)
    flat = flatten(inst, build_schedule(schema))
    t, src = flat.table("T"), inst.table("T")
    assert list(t.props) == list(src.props)
    for k in src.props:
        assert list(t.props[k]) == list(src.props[k])
    assert list(t.labels) == list(src.labels)


def test_synthetic_column_count_plausible():
    inst = generate(SynthConfig(n_a=50, seed=0))
    flat = flatten(inst, build_schedule(inst.schema))
    assert 8 <= len(flat.schema.tables[0].props) <= 14
    again = flatten(inst, build_schedule(inst.schema))
    assert [a.name for a in again.schema.tables[0].props] == [a.name for a in flat.schema.tables[0].props]


def test_root_features():
    inst = generate(SynthConfig(n_a=20, seed=0))
    r = root_features(inst)
    assert [a.name for a in r.schema.tables[0].props] == ["p"]
    assert r.table("A").rels == {}


# --- naive oracle on random small instances --------------------------------

SCHEMA = json.loads(json.dumps(CYCLE_SCHEMA))
SCHEMA["tables"][2]["props"].append({"name": "tok", "kind": "categorical"})


def oracle_value(inst, table, row, path, base, freq_of):
    """Recursive mean straight from the relation sets; freq columns count matches at the last hop."""
    if not path:
        return None
    tdef = inst.schema.table(table)
    target = tdef.relation(path[0]).target
    kids = relation_rows(inst, table, path[0], row)
    if len(path) == 1:
        col = inst.table(target).props[base]
        idx = inst.row_index(target)
        vals = [col[idx[k]] for k in kids]
        if freq_of is not None:
            return sum(v == freq_of for v in vals) / len(vals) if vals else 0.0
        vals = [float(v) for v in vals if not math.isnan(v)]
        return sum(vals) / len(vals) if vals else math.nan
    vals = [oracle_value(inst, target, k, path[1:], base, freq_of) for k in kids]
    if freq_of is not None and not kids:
        return 0.0
    vals = [v for v in vals if not math.isnan(v)]
    return sum(vals) / len(vals) if vals else math.nan


def expected_names(inst, schedule):
    cats = collect_categories(inst)
    names = set()

    def walk(nid, path):
        table = schedule.table_of(nid)
        if path:
            for a in inst.schema.table(table).props:
                if a.kind == "numerical":
                    names.add("/".join(path + [a.name]) + ":mean")
                else:
                    names.update("/".join(path + [a.name]) + f":freq={c}" for c in cats[(table, a.name)])
        for arc in schedule.child_arcs(nid):
            walk(arc.child, path + [arc.relation])

    walk(schedule.root, [])
    return names


@st.composite
def small_instances(draw):
    n = {t: draw(st.integers(1 if t == "A" else 0, 6)) for t in "ABCD"}
    ids = {t: [f"{t.lower()}{i}" for i in range(n[t])] for t in "ABCD"}
    val = st.one_of(st.just(""), st.sampled_from(["0", "0.25", "0.5", "1", "3"]))

    def refs(t):
        return ";".join(draw(st.lists(st.sampled_from(ids[t]), max_size=3, unique=True))) if ids[t] else ""

    rows = {
        "A": [{"id": i, "p": draw(val), "r": refs("B"), "r'": refs("D"), "l": draw(st.sampled_from("01"))} for i in ids["A"]],
        "B": [{"id": i, "p'": draw(val), "r''": refs("C")} for i in ids["B"]],
        "C": [{"id": i, "p''": draw(val), "tok": draw(st.sampled_from(["x", "y", ""])), "r'''": refs("A")} for i in ids["C"]],
        "D": [{"id": i, "p'''": draw(val)} for i in ids["D"]],
    }
    return load_instance(parse_schema(json.dumps(SCHEMA)), rows)


@settings(max_examples=40, deadline=None)
@given(small_instances(), st.integers(1, 2))
def test_flatten_matches_naive_oracle(inst, cover):
    schedule = build_schedule(inst.schema, cover)
    flat = flatten(inst, schedule)
    t = flat.table("A")
    assert set(t.props) - {"p"} == expected_names(inst, schedule)
    for name, col in t.props.items():
        if name == "p":
            continue
        head, suffix = name.rsplit(":", 1)
        *path, base = head.split("/")
        freq_of = suffix[len("freq="):] if suffix.startswith("freq=") else None
        for i, rid in enumerate(t.ids):
            want = oracle_value(inst, "A", rid, path, base, freq_of)
            got = col[i]
            assert (math.isnan(want) and math.isnan(got)) or got == want, (name, rid, got, want)

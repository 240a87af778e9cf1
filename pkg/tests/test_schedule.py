import json
from collections import Counter

from hypothesis import given, settings, strategies as st

from relgbdt.data import parse_schema
from relgbdt.schedule import _has_circuit, build_schedule, instance_relation_rows, topological_order


def schema_of(tables, root):
    return parse_schema(json.dumps({
        "tables": [
            {"name": t, "props": [{"name": f"x_{t}"}], "rels": [{"name": n, "target": tgt} for n, tgt in rels],
             **({"label": {"name": "y", "task": "regression"}} if t == root else {})}
            for t, rels in tables.items()
        ],
        "root": root,
    }))


def root_paths(schedule):
    """Every root-to-node path as a list of tables (brute-force DFS)."""
    paths = []

    def walk(nid, path):
        path = path + [schedule.table_of(nid)]
        paths.append(path)
        for a in schedule.child_arcs(nid):
            walk(a.child, path)

    walk(schedule.root, [])
    return paths


def has_back_edge(schedule):
    state = {}

    def visit(n):
        state[n] = 1
        for a in schedule.child_arcs(n):
            if state.get(a.child) == 1 or (a.child not in state and visit(a.child)):
                return True
        state[n] = 2
        return False

    return visit(schedule.root)


def test_cycle_cover_twice(cycle_schema):
    s = build_schedule(cycle_schema, 2)
    assert len(s.nodes) == 8
    assert Counter(n.table for n in s.nodes) == {"A": 2, "B": 2, "C": 2, "D": 2}
    assert s.table_of(s.root) == "A"
    assert {a.relation for a in s.child_arcs(s.root)} == {"r", "r'"}
    # A -> B -> C -> A chain, then the second A again has r and r'
    second_a = "A/r/r''/r'''"
    assert s.table_of(second_a) == "A"
    assert {a.relation for a in s.child_arcs(second_a)} == {"r", "r'"}
    assert s.is_leaf("A/r/r''/r'''/r/r''")


def test_cycle_default_cover(cycle_schema):
    s = build_schedule(cycle_schema)
    assert s.cover_count == 3
    assert Counter(n.table for n in s.nodes) == {"A": 3, "B": 3, "C": 3, "D": 3}


def test_single_table():
    s = build_schedule(schema_of({"T": []}, "T"))
    assert [n.id for n in s.nodes] == ["T"] and s.arcs == ()
    assert topological_order(s) == ["T"]


def test_self_loop_chain():
    s = build_schedule(schema_of({"t": [("r", "t")]}, "t"), 3)
    # hand enumeration: [t], [t, t], [t, t, t]; a fourth t would exceed 3
    assert sorted(root_paths(s), key=len) == [["t"], ["t", "t"], ["t", "t", "t"]]
    assert [n.id for n in s.nodes] == ["t", "t/r", "t/r/r"]


def test_acyclic_schema_is_one_to_one():
    # two tables pointing at the same target
    s = build_schedule(schema_of({"s": [("a", "t"), ("b", "u")], "t": [("c", "v")], "u": [("d", "v")], "v": []}, "s"))
    assert len(s.nodes) == 4 and len(s.arcs) == 4
    v = [n.id for n in s.nodes if n.table == "v"][0]
    assert len(s.parent_arcs(v)) == 2


def test_multiple_relations_same_pair():
    s = build_schedule(schema_of({"s": [("r1", "t"), ("r2", "t")], "t": []}, "s"))
    assert [a.relation for a in s.arcs] == ["r1", "r2"]


def test_unreachable_table_warns(caplog):
    s = build_schedule(schema_of({"s": [], "orphan": [("o", "s")]}, "s"))
    assert [n.table for n in s.nodes] == ["s"]
    assert "unreachable" in caplog.text


def test_topological_order_cover_twice(cycle_schema):
    s = build_schedule(cycle_schema, 2)
    order = topological_order(s)
    assert order[0] == s.root
    pos = {n: i for i, n in enumerate(order)}
    for a in s.arcs:
        assert pos[a.parent] < pos[a.child]
    rev = order[::-1]
    rpos = {n: i for i, n in enumerate(rev)}
    assert all(rpos[a.child] < rpos[a.parent] for a in s.arcs)


def test_instance_relation_rows(cycle_schema, toy):
    s = build_schedule(cycle_schema, 2)
    e1 = s.child_arcs(s.root)[0]
    assert e1.relation == "r"
    assert instance_relation_rows(s, e1, toy, "a_1") == ["b_0", "b_1"]
    e_r1 = s.child_arcs(s.root)[1]
    assert instance_relation_rows(s, e_r1, toy, "a_0") == []
    deep = [a for a in s.arcs if a.relation == "r" and a.parent != s.root][0]
    assert instance_relation_rows(s, deep, toy, "a_1") == instance_relation_rows(s, e1, toy, "a_1")


@st.composite
def random_schemata(draw):
    n = draw(st.integers(1, 4))
    names = [f"t{i}" for i in range(n)]
    tables = {}
    for i, t in enumerate(names):
        k = draw(st.integers(0, 2))
        tables[t] = [(f"r{i}_{j}", draw(st.sampled_from(names))) for j in range(k)]
    return schema_of(tables, "t0")


@settings(max_examples=60, deadline=None)
@given(random_schemata(), st.integers(1, 3))
def test_schedule_invariants(schema, cover):
    s = build_schedule(schema, cover)
    assert not has_back_edge(s)
    assert s.table_of(s.root) == schema.root
    reachable = {n.table for n in s.nodes}
    for a in s.arcs:
        rel = schema.table(s.table_of(a.parent)).relation(a.relation)
        assert rel.target == s.table_of(a.child)
    for path in root_paths(s):
        assert max(Counter(path).values()) <= cover
    again = build_schedule(schema, cover)
    assert again == s
    if not _has_circuit(schema):
        assert len(s.nodes) == len(reachable)
        assert len(s.arcs) == sum(len(schema.table(t).rels) for t in reachable)

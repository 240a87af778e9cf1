import csv

import numpy as np
import pytest
from scipy import integrate

from relgbdt.data import validate_instance, write_instance_dir
from relgbdt.synthetic import SynthConfig, generate, label_rule
from relgbdt.tree import FeatureColumn, TreeConfig, train_tree


def reread_labels(directory):
    """Recompute labels from the CSV files alone with a double loop."""
    def rows(name):
        with open(directory / f"{name}.csv", newline="", encoding="utf-8") as f:
            return {r["id"]: r for r in csv.DictReader(f)}

    A, B, C = rows("A"), rows("B"), rows("C")
    out = {}
    for aid, a in A.items():
        p = float(a["p"])
        pos = 0
        for bid in filter(None, a["r"].split(";")):
            for cid in filter(None, B[bid]["r''"].split(";")):
                if p <= float(C[cid]["p''"]):
                    pos = 1
        out[aid] = (pos, int(a["l"]))
    return out


def test_labels_match_reread(tmp_path):
    inst = generate(SynthConfig(n_a=300, seed=5))
    write_instance_dir(inst, tmp_path)
    for aid, (want, stored) in reread_labels(tmp_path).items():
        assert stored == want
        assert label_rule(inst, aid) == want


def test_generated_instance_is_valid():
    inst = generate(SynthConfig(n_a=200, seed=1))
    assert validate_instance(inst.schema, inst).ok
    for t in "ABCD":
        p = next(iter(inst.table(t).props.values()))
        assert ((p >= 0) & (p <= 1)).all()
    counts = [len(r) for r in inst.table("A").rels["r"]]
    assert set(counts) <= {0, 1, 2, 3}
    assert all(len(r) == 1 for r in inst.table("C").rels["r'''"])
    # every B row belongs to exactly one A row
    owners = [b for refs in inst.table("A").rels["r"] for b in refs]
    assert sorted(owners) == sorted(inst.table("B").ids)


def test_deterministic_bytes(tmp_path):
    write_instance_dir(generate(SynthConfig(n_a=100, seed=1)), tmp_path / "a")
    write_instance_dir(generate(SynthConfig(n_a=100, seed=1)), tmp_path / "b")
    for t in "ABCD":
        assert (tmp_path / "a" / f"{t}.csv").read_bytes() == (tmp_path / "b" / f"{t}.csv").read_bytes()
    write_instance_dir(generate(SynthConfig(n_a=100, seed=2)), tmp_path / "c")
    assert (tmp_path / "a" / "A.csv").read_bytes() != (tmp_path / "c" / "A.csv").read_bytes()


def test_row_without_children_is_negative():
    for seed in range(50):
        inst = generate(SynthConfig(n_a=1, seed=seed))
        if not inst.table("A").rels["r"][0]:
            assert inst.table("A").labels[0] == 0
            return
    pytest.fail("no seed produced an A row without B children")


def test_scale():
    inst = generate(SynthConfig(seed=0))
    total = sum(inst.n_rows(t) for t in "ABCD")
    # expectation 7168 * (1 + 1.5 + 2.25 + 1.5) = 44800, sd around 200
    assert 43800 < total < 45800


def analytic_negative_fraction():
    # P(no grandchild beats p) with k ~ U{0..3} children per row:
    # g(s) = E[s^k]; each B row fails with prob g(p), so the A row fails with g(g(p)).
    g = lambda s: (1 + s + s ** 2 + s ** 3) / 4
    return integrate.quad(lambda p: g(g(p)), 0, 1)[0]


def test_negative_fraction_matches_generator_analysis():
    inst = generate(SynthConfig(n_a=20000, seed=9))
    frac = 1 - inst.table("A").labels.mean()
    assert frac == pytest.approx(analytic_negative_fraction(), abs=0.015)


def test_regression_variant():
    inst = generate(SynthConfig(n_a=200, seed=4, regression=True))
    assert inst.schema.label.task == "regression"
    A, B, C = inst.table("A"), inst.table("B"), inst.table("C")
    bi, ci = inst.row_index("B"), inst.row_index("C")
    for i in range(200):
        grand = [C.props["p''"][ci[c]] for b in A.rels["r"][i] for c in B.rels["r''"][bi[b]]]
        want = (max(grand) if grand else 0.0) - A.props["p"][i]
        assert A.labels[i] == want


def test_p_only_tree_is_capped():
    inst = generate(SynthConfig(n_a=6000, seed=2))
    p, y = inst.table("A").props["p"], inst.table("A").labels
    tr, te = np.arange(4800), np.arange(4800, 6000)
    tree = train_tree([FeatureColumn("p", "numerical", p[tr])], y[tr],
                      config=TreeConfig(max_depth=30, min_examples_leaf=1, feature_sampling_ratio=1.0))
    acc = np.mean((tree.predict({"p": p[te]}) > 0.5) == y[te])
    assert acc <= 0.70

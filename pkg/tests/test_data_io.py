"""Files, simulation, prediction and cross-validation splits."""

import json
import math

import numpy as np
import pytest

from helpers import loop_counts
from mdsampler.dags import DiscreteDataset, dag_from_edges
from mdsampler.data_io import (SIGNALING11, SIGNALING11_CLAMPS, DataError, GroundTruthBn,
                               arities_path, crossval_split, dr_predictive_log_probability,
                               load_dataset, predictive_log_probability, random_cpts,
                               read_network, reference_network, save_dataset,
                               score_vs_reference, simulate_dataset,
                               synthetic_signaling_data, threshold_network, write_network)
from mdsampler.report import adjacency_tsv, dumps


def bn3(seed=0):
    rng = np.random.default_rng(seed)
    dag = dag_from_edges(3, [(0, 1), (1, 2)])
    ar = (2, 3, 2)
    return GroundTruthBn(dag, ar, random_cpts(dag, ar, rng)), rng


def test_csv_round_trip(tmp_path):
    bn, rng = bn3()
    d = simulate_dataset(bn, 50, 0.2, rng)
    d.cond = np.arange(50) % 3
    path = str(tmp_path / "d.csv")
    save_dataset(path, d)
    back = load_dataset(path)
    np.testing.assert_array_equal(back.values, d.values)
    np.testing.assert_array_equal(back.fixed, d.fixed)
    np.testing.assert_array_equal(back.cond, d.cond)
    assert back.arities == d.arities
    assert json.load(open(arities_path(path)))["arities"] == [2, 3, 2]


def test_arities_inferred_without_sidecar(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("Z1,Z2,I1,I2\n1,2,0,0\n2,3,1,0\n")
    d = load_dataset(str(p))
    assert d.arities == (2, 3)
    assert d.values.tolist() == [[0, 1], [1, 2]]
    assert d.fixed.tolist() == [[False, False], [True, False]]


@pytest.mark.parametrize("body,match", [
    ("Z1,Z2,I1\n", "line 1"),
    ("Z1,I1\n1,0\n1,x\n", "line 3, column I1"),
    ("Z1,I1\n0,0\n", "line 2, column Z1"),
    ("Z1,I1\n1,2\n", "line 2, column I1"),
    ("Z1,I1\n1,0,5\n", "line 2"),
    ("", "empty"),
])
def test_csv_errors_name_line_and_column(tmp_path, body, match):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(DataError, match=match):
        load_dataset(str(p))


def test_declared_arity_too_small(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("Z1,I1\n1,0\n3,0\n")
    with pytest.raises(DataError, match="line 3, column Z1"):
        load_dataset(str(p), arities=[2])


def test_network_round_trip(tmp_path):
    pa = dag_from_edges(4, [(0, 1), (2, 1), (1, 3)])
    path = str(tmp_path / "n.txt")
    text = write_network(path, pa, (2, 2, 3, 2))
    assert text.splitlines()[:3] == ["4", "2 2 3 2", "1 -> 2"]
    assert read_network(path) == (pa, [2, 2, 3, 2])


@pytest.mark.parametrize("body,match", [
    ("3\n2 2\n", "2 arities for 3"),
    ("2\n2 2\n1 -> 3\n", "bad edge"),
    ("2\n2 2\n1 -> 2\n2 -> 1\n", "cycle"),
    ("x\n2\n", "node count"),
    ("2\n2 2\n1 2\n", "expected"),
])
def test_network_errors(tmp_path, body, match):
    p = tmp_path / "n.txt"
    p.write_text(body)
    with pytest.raises(DataError, match=match):
        read_network(str(p))


def test_simulation_clamps():
    bn, rng = bn3(1)
    d = simulate_dataset(bn, 101, 0.2, rng)
    rows = d.fixed.any(axis=1)
    assert rows.sum() == math.ceil(0.2 * 101)
    assert d.fixed[rows].sum(axis=1).tolist() == [1] * int(rows.sum())
    bn11, data = synthetic_signaling_data(seed=0, rows_per_condition=20)
    assert data.n == 20 * len(SIGNALING11_CLAMPS) and data.m == 11
    assert len(set(data.cond.tolist())) == len(SIGNALING11_CLAMPS)
    assert len(SIGNALING11) == 20
    for c, node in enumerate(SIGNALING11_CLAMPS):
        block = data.fixed[data.cond == c + 1]      # condition labels are 1-based
        if node is None:
            assert not block.any()
        else:
            assert block[:, node].all() and block.sum() == block.shape[0]


def test_sampler_follows_cpts():
    bn, rng = bn3(2)
    values, _ = bn.sample(60_000, rng)
    # P(Z2 | Z1) from samples vs the table
    for s in range(2):
        sel = values[:, 0] == s
        freq = np.bincount(values[sel, 1], minlength=3) / sel.sum()
        np.testing.assert_allclose(freq, bn.cpts[1][s], atol=0.015)


def test_reference_networks_are_acyclic():
    for name in ("chain6", "graph6", "signaling11"):
        dag, names = reference_network(name)
        assert len(names) == len(dag)
    with pytest.raises(ValueError):
        reference_network("nope")


def loop_predictive(train, test_row, test_fixed, parent_sets, alpha=1.0):
    total = 0.0
    for i, mask in enumerate(parent_sets):
        if test_fixed[i]:
            continue
        parents = [p for p in range(train.m) if mask >> p & 1]
        counts = loop_counts(train.values, train.fixed, train.arities, i, parents)
        q, r = counts.shape
        k, stride = 0, 1
        for p in parents:
            k += stride * test_row[p]
            stride *= train.arities[p]
        total += math.log((counts[k, test_row[i]] + alpha / (q * r)) / (counts[k].sum() + alpha / q))
    return total


def test_predictive_matches_loop():
    bn, rng = bn3(3)
    d = simulate_dataset(bn, 200, 0.3, rng)
    train, test = d.subset(np.arange(150)), d.subset(np.arange(150, 200))
    pa = dag_from_edges(3, [(0, 1), (2, 1)])
    got = predictive_log_probability(test, pa, train)
    ref = [loop_predictive(train, test.values[r], test.fixed[r], pa) for r in range(test.n)]
    np.testing.assert_allclose(got, ref, rtol=1e-12)


def test_dr_predictive_is_mixture():
    bn, rng = bn3(4)
    d = simulate_dataset(bn, 120, 0.2, rng)
    train, test = d.subset(np.arange(100)), d.subset(np.arange(100, 120))
    g0 = dag_from_edges(3, [])
    g1 = dag_from_edges(3, [(0, 1), (1, 2)])
    g2 = dag_from_edges(3, [(1, 0)])
    lam = np.array([0.1, 0.6, 0.3])
    got = dr_predictive_log_probability(test, [g1, g2], lam, train, g0)
    ref = np.log(sum(l * np.exp(predictive_log_probability(test, g, train))
                     for l, g in zip(lam, (g0, g1, g2))))
    np.testing.assert_allclose(got, ref, rtol=1e-12)
    # one domain with all the mass reduces to that network
    one = dr_predictive_log_probability(test, [g1], np.array([0.0, 1.0]), train, g0)
    np.testing.assert_allclose(one, predictive_log_probability(test, g1, train))


def test_thresholds_and_scoring():
    A = np.array([[0, 0.95, 0.2], [0.05, 0, 0.7], [0, 0.91, 0]])
    assert threshold_network(A, 0.9) == (0, 5, 0)
    assert threshold_network(A, 0.5) == (0, 5, 2)
    ev = score_vs_reference((0, 1, 2), (0, 1, 0))
    assert (ev.tp, ev.fp, ev.fn) == (1, 1, 0)


def test_crossval_splits():
    d = DiscreteDataset(np.zeros((23, 2), int), np.zeros((23, 2), bool), (2, 2),
                        cond=np.repeat([3, 1, 2], [8, 8, 7]))
    splits = crossval_split(d, 5, rng=np.random.default_rng(0))
    tests = np.concatenate([t for _, t in splits])
    assert sorted(tests.tolist()) == list(range(23))
    assert {len(t) for _, t in splits} <= {4, 5}
    for tr, te in splits:
        assert not set(tr) & set(te) and len(tr) + len(te) == 23
    by = crossval_split(d, 0, by_condition=True)
    assert [len(te) for _, te in by] == [8, 7, 8]
    assert all((d.cond[te] == d.cond[te][0]).all() for _, te in by)
    with pytest.raises(ValueError):
        crossval_split(d, 1)


def test_json_uses_17_significant_digits():
    text = dumps({"a": 0.1, "b": [1.0 / 3.0, float("nan")], "c": np.int64(3), "d": np.float32(0.5)})
    obj = json.loads(text)
    assert "0.10000000000000001" in text and obj["b"][1] is None
    assert obj["b"][0] == 1.0 / 3.0 and obj["c"] == 3 and obj["d"] == 0.5


def test_adjacency_tsv():
    text = adjacency_tsv(np.array([[0.0, 0.25], [1.0, 0.0]]), ["a", "b"])
    lines = text.splitlines()
    assert lines[0].split("\t") == ["", "a", "b"]
    assert lines[1].split("\t")[2] == "0.25"

"""Exhaustive enumeration oracle against a direct brute-force computation."""

import math

import numpy as np
import pytest

from helpers import all_dags, brute_neighbors, loop_dag_score
from mdsampler.dags import FamilyScores, dag_from_edges
from mdsampler.data_io import GroundTruthBn, random_cpts, simulate_dataset
from mdsampler.oracle import (basin_roots, cached_landscape, count_dags, enumerate_dags,
                              exact_landscape, landscape_key, load_landscape)


def data_for(m, seed=0, n=40):
    rng = np.random.default_rng(seed)
    dag = dag_from_edges(m, [(i, i + 1) for i in range(m - 1)])
    ar = (2,) * m
    return simulate_dataset(GroundTruthBn(dag, ar, random_cpts(dag, ar, rng)), n, 0.2, rng)


def test_count_dags_sequence():
    # OEIS A003024
    assert [count_dags(n) for n in range(7)] == [1, 1, 3, 25, 543, 29281, 3781503]


def test_enumerate_guards():
    with pytest.raises(ValueError):
        enumerate_dags(7)
    assert len(enumerate_dags(5, 4)) == count_dags(5)
    assert len(enumerate_dags(3, 4)) == 25       # the cap is clipped to m - 1


def test_basin_roots():
    np.testing.assert_array_equal(basin_roots([1, 2, 2, 3, 3]), [2, 2, 2, 3, 3])


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_landscape_matches_brute_force(seed):
    m = 3
    data = data_for(m, seed)
    land = exact_landscape(FamilyScores(data))
    dags = all_dags(m)
    logs = np.array([loop_dag_score(data, g) for g in dags])
    post = np.exp(logs - logs.max())
    post /= post.sum()

    def climb(g):
        while True:
            nb = sorted(brute_neighbors(g, 2), key=lambda h: -loop_dag_score(data, h))
            if not nb or loop_dag_score(data, nb[0]) <= loop_dag_score(data, g):
                return g
            g = nb[0]

    modes = {}
    for g, p in zip(dags, post):
        mo = climb(g)
        modes[mo] = modes.get(mo, 0.0) + p
    got = {nu: land.lam[k] for k, nu in enumerate(land.modes)}
    assert set(got) == set(modes)
    for nu in modes:
        assert got[nu] == pytest.approx(modes[nu], rel=1e-10)
    rows = {tuple(int(v) for v in r): n for n, r in enumerate(land.dags)}
    for g, lp in zip(dags, np.log(post)):
        assert land.log_post[rows[g]] == pytest.approx(lp, abs=1e-10)
    assert math.fsum(land.lam.tolist()) == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(np.einsum("k,kij->ij", land.lam, land.A_k), land.A, atol=1e-14)
    # modes are sorted by score
    assert list(land.mode_scores) == sorted(land.mode_scores, reverse=True)


def test_cache_round_trip(tmp_path):
    data = data_for(4, 3)
    land = cached_landscape(data, str(tmp_path))
    key = landscape_key(data)
    assert (tmp_path / f"{key}.npz").exists() and (tmp_path / f"{key}.json").exists()
    again = load_landscape(str(tmp_path / f"{key}.npz"))
    assert again.modes == land.modes
    np.testing.assert_array_equal(again.lam, land.lam)
    assert cached_landscape(data, str(tmp_path)).modes == land.modes
    assert landscape_key(data, beta=0.2) != key

"""Sampler engine: ladder, registry, gain schedule, MH kernel invariance."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdsampler.continuous import ContinuousSpace, RastriginTarget, rastrigin_oracle
from mdsampler.core import (MD, MD0, WL, DensityLadder, GammaSchedule, ModeRegistry,
                            MultiDomainSampler, SamplerConfig, WeightMatrix, locate, mh_step,
                            shift_ladder, update_mode_registry, update_weights_and_stats)
from mdsampler.dags import DagSpace, FamilyScores, dag_from_edges, empty_dag
from mdsampler.data_io import GroundTruthBn, random_cpts, simulate_dataset


class ToyModel:
    """Integer states; every state is its own mode."""

    hashable_states = True

    def initial_adapt_statistic(self):
        return np.ones(2)


def small_dag_space(seed=0, m=4, n=80):
    rng = np.random.default_rng(seed)
    dag = dag_from_edges(m, [(i, i + 1) for i in range(m - 1)])
    ar = (2,) * m
    data = simulate_dataset(GroundTruthBn(dag, ar, random_cpts(dag, ar, rng)), n, 0.2, rng)
    return DagSpace(FamilyScores(data))


def test_ladder_columns():
    lad = DensityLadder(0.0, 2.0, 4)       # cut points 0, -2, -4
    np.testing.assert_array_equal(lad.levels, [0.0, -2.0, -4.0])
    assert [lad.column(v) for v in (3.0, 0.0, -0.5, -2.0, -3.9, -4.0, -50.0)] == [0, 0, 1, 1, 2, 2, 3]
    lad.shift_up()
    np.testing.assert_array_equal(lad.levels, [2.0, 0.0, -2.0])
    assert lad.column(1.0) == 1


@pytest.mark.parametrize("kwargs", [dict(L=1), dict(delta_h=0), dict(p_mx=1.0), dict(kstar=0),
                                    dict(burn_in=10, n_iter=5), dict(variant="xx"),
                                    dict(gamma0=1.5)])
def test_config_rejects_bad_values(kwargs):
    with pytest.raises(ValueError):
        SamplerConfig(**kwargs)


def test_md0_and_wl_have_no_mixed_jumps():
    assert SamplerConfig(variant="md0", p_mx=0.3).p_mx == 0.0
    assert SamplerConfig(variant="wl", p_mx=0.3).p_mx == 0.0
    assert SamplerConfig(variant="md", p_mx=0.3).p_mx == 0.3


def test_gamma_halves_on_flat_counters_only():
    s = GammaSchedule()
    occ = np.ones((1, 3), dtype=np.uint8)
    assert not s.update(np.array([[10, 20, 10]]), occ, 1)
    assert s.gamma == 1.0
    assert s.update(np.array([[10, 11, 12]]), occ, 2)
    assert s.gamma == 0.5 and s.n_decreases == 1


def test_gamma_deterministic_phase():
    s = GammaSchedule(gamma=1e-4 * 0.75)
    s.update(np.zeros((1, 1)), np.ones((1, 1), dtype=np.uint8), 100)
    assert s.phase == s.DETERMINISTIC and s.t_c == 100
    inv = s.inv_gamma
    for t in range(101, 200):
        s.update(np.zeros((1, 1)), np.ones((1, 1), dtype=np.uint8), t)
    assert s.inv_gamma == inv + 99
    # the update at t produces gamma_{t+1} = 1 / (t + 1 + xi)
    assert s.gamma == pytest.approx(1.0 / (200 + s.xi), rel=1e-12)


def test_registry_add_and_replace_md():
    model = ToyModel()
    reg = ModeRegistry(model, 2, (2,))
    W = WeightMatrix(3, 3)
    W.w[0] = [1.0, 2.0, 3.0]
    assert update_mode_registry(5, -1.0, reg, W, MD) == ("added", 1)
    assert update_mode_registry(6, -3.0, reg, W, MD) == ("added", 2)
    np.testing.assert_array_equal(W.w[1], 0.0)
    W.w[2] = [0.5, 0.5, 0.5]
    W.c[2] = [1, 2, 3]
    # full: a lower mode is ignored, a higher one evicts the lowest (slot 2)
    assert update_mode_registry(7, -4.0, reg, W, MD) == ("unchanged", 0)
    assert update_mode_registry(8, -2.0, reg, W, MD) == ("replaced", 2)
    assert reg.modes == [5, 8] and reg.index_of(6) == 0 and reg.index_of(8) == 2
    np.testing.assert_array_equal(W.w[0], [1.5, 2.5, 3.5])
    np.testing.assert_array_equal(W.w[2], 0.0)
    np.testing.assert_array_equal(W.c[0], [1, 2, 3])
    np.testing.assert_array_equal(reg.V[1], [1.0, 1.0])


def test_registry_wl_rows_copy_row_zero():
    reg = ModeRegistry(ToyModel(), 1, (2,))
    W = WeightMatrix(2, 3)
    W.w[0] = [1.0, 2.0, 3.0]
    update_mode_registry(1, -1.0, reg, W, WL)
    np.testing.assert_array_equal(W.w[1], W.w[0])
    update_mode_registry(2, 0.0, reg, W, WL)
    np.testing.assert_array_equal(W.w[1], W.w[0])
    np.testing.assert_array_equal(W.w[0], [1.0, 2.0, 3.0])


def test_ladder_shift_cascade():
    reg = ModeRegistry(ToyModel(), 3, (2,))
    reg.add(1, 5.5)
    lad = DensityLadder(0.0, 2.0, 4)
    W = WeightMatrix(4, 4)
    W.w[:2] = [[1.0, 2.0, 3.0, 4.0], [5.0, 6.0, 7.0, 8.0]]
    W.c[:2] = [[1, 1, 1, 1], [2, 2, 2, 2]]
    assert shift_ladder(reg, lad, W)
    assert lad.top == 2.0
    # the two lowest bands merge, everything moves down one, the top band restarts
    np.testing.assert_array_equal(W.w[:2], [[0.0, 1.0, 2.0, 7.0], [0.0, 5.0, 6.0, 15.0]])
    np.testing.assert_array_equal(W.c[:2], [[0, 1, 1, 2], [0, 2, 2, 4]])
    assert shift_ladder(reg, lad, W)            # 5.5 > 2 + 2
    assert not shift_ladder(reg, lad, W)        # 5.5 <= 4 + 2
    assert lad.top == 4.0


def test_update_weights_md_and_wl():
    space = small_dag_space()
    reg = ModeRegistry(space, 3, (3,))
    nu = space.descend(empty_dag(4))
    reg.add(nu, space.log_density(nu))
    lad = DensityLadder(space.log_density(nu), 2.0, 4)
    W = WeightMatrix(4, 4)
    pt = locate(space, nu, space.log_density(nu), reg, lad)
    update_weights_and_stats(pt, W, reg, space, 0.5, MD)
    assert W.w[1, pt.j] == 0.5 and W.w[0].sum() == 0.0
    # the visited state is the mode itself: zero edits pull V halfway to 0
    np.testing.assert_allclose(reg.V[0], 0.75)
    update_weights_and_stats(pt, W, reg, space, 0.5, WL)
    assert W.w[0, pt.j] == 0.5 and W.w[1, pt.j] == 1.0


@settings(max_examples=25, deadline=None)
@given(st.floats(-50, 50), st.integers(0, 10_000))
def test_mh_decisions_invariant_to_weight_translation(shift, seed):
    space = small_dag_space(1)
    reg = ModeRegistry(space, 5, (3,))
    for g in (empty_dag(4), dag_from_edges(4, [(0, 1), (1, 2), (2, 3)])):
        nu = space.descend(g)
        if not reg.index_of(nu):
            reg.add(nu, space.log_density(nu))
    lad = DensityLadder(reg.max_log_density(), 3.0, 5)
    W1 = WeightMatrix(6, 5)
    W1.w[:] = np.random.default_rng(seed).normal(size=(6, 5))
    W2 = WeightMatrix(6, 5)
    W2.w[:] = W1.w + shift
    paths = []
    for W in (W1, W2):
        rng = np.random.default_rng(seed)
        cur = locate(space, empty_dag(4), space.log_density(empty_dag(4)), reg, lad)
        path = []
        for _ in range(40):
            cur, acc, kind = mh_step(space, cur, W, reg, lad, rng, 0.3)
            path.append((cur.x, acc, kind))
        paths.append(path)
    assert paths[0] == paths[1]


def test_continuous_kernel_preserves_working_density():
    """1-d Rastrigin with frozen weights: cell frequencies match grid integration."""
    rng = np.random.default_rng(11)
    target = RastriginTarget(1, 2.0)
    space = ContinuousSpace(target, sigma=1.0)
    oracle = rastrigin_oracle(2.0)
    modes = sorted(oracle.modes, key=lambda t: -target.log_density(np.array([t])))
    reg = ModeRegistry(space, 5, (1, 1), 1)
    for mo in modes[:2]:                           # the third basin stays domain 0
        reg.add(np.array([mo]), target.log_density(np.array([mo])))
    reg.V[:2] = [[[0.4]], [[0.2]]]
    lad = DensityLadder(0.0, 1.5, 4)
    W = WeightMatrix(6, 4)
    W.w[:3] = rng.normal(0.0, 1.0, size=(3, 4))

    grid = np.linspace(-6.0, 6.0, 240_001)
    logp = np.array([target.log_density(np.array([t])) for t in grid])
    b_idx = np.array([oracle.classify(np.array([t]))[0] for t in grid])
    mode_k = {i: reg.index_of(np.array([b.mode])) for i, b in enumerate(oracle.basins)}
    ks = np.array([mode_k[i] for i in b_idx])
    js = np.array([lad.column(v) for v in logp])
    dens = np.exp(logp - W.w[ks, js])
    cells = ks * 4 + js
    exact = np.bincount(cells, weights=dens, minlength=12)
    exact /= exact.sum()

    x0 = np.array([0.1])
    cur = locate(space, x0, target.log_density(x0), reg, lad)
    counts = np.zeros(12)
    n = 100_000
    for _ in range(n):
        cur, _, _ = mh_step(space, cur, W, reg, lad, rng, 0.3)
        counts[cur.k * 4 + cur.j] += 1
    assert 0.5 * np.abs(counts / n - exact).sum() < 0.02


def test_md0_run_never_mixes_and_wl_rows_stay_equal():
    space = small_dag_space(2, m=5, n=120)
    cfg = SamplerConfig(L=6, delta_h=2.0, kstar=5, burn_in=2000, n_iter=8000, variant=MD0)
    s = MultiDomainSampler(space, cfg, empty_dag(5), np.random.default_rng(0))
    rep = s.run()
    assert rep.acceptance["mixed"]["proposed"] == 0
    cfg = SamplerConfig(L=6, delta_h=2.0, kstar=5, burn_in=2000, n_iter=8000, variant=WL)
    s = MultiDomainSampler(space, cfg, empty_dag(5), np.random.default_rng(0))
    s.run()
    w = s.W.w[:s.registry.M + 1]
    assert np.all(w == w[0])


def test_same_seed_same_run():
    space = small_dag_space(3)
    cfg = SamplerConfig(L=6, delta_h=2.0, kstar=5, burn_in=1000, n_iter=5000)
    a = MultiDomainSampler(space, cfg, empty_dag(4), np.random.default_rng(5)).run()
    b = MultiDomainSampler(small_dag_space(3), cfg, empty_dag(4), np.random.default_rng(5)).run()
    assert a.log_weights == b.log_weights and a.visits == b.visits and a.modes == b.modes


def test_burnin_registers_modes_and_shifts_ladder():
    space = small_dag_space(4, m=5, n=200)
    cfg = SamplerConfig(L=5, delta_h=1.0, kstar=50, burn_in=5000, n_iter=5000)
    s = MultiDomainSampler(space, cfg, empty_dag(5), np.random.default_rng(1))
    reg, lad, W, cur = s.run_burnin()
    assert reg.M >= 1
    # the ladder top is within one step of the best recorded mode
    assert reg.max_log_density() <= lad.top + lad.delta_h
    assert math.isfinite(cur.logp)
    assert W.c.sum() == 0

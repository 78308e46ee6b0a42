"""Continuous target, descent, mixture proposal and quadrature oracle."""

import math

import numpy as np
import pytest
from scipy import stats

from mdsampler.continuous import (ContinuousSpace, RastriginTarget, gradient_ascent, layer_of,
                                  rastrigin_expectations, rastrigin_oracle)
from mdsampler.core import ModeRegistry, SamplerConfig
from mdsampler.experiments import rastrigin_run, rep_rng


@pytest.fixture(scope="module")
def oracle():
    return rastrigin_oracle(2.0)


def grid_masses(A=2.0):
    """Trapezoid masses and means between sign changes of the derivative."""
    t = np.linspace(-12, 12, 2_400_001)
    f = np.exp(-(t * t + A * (1 - np.cos(np.pi * t))))
    g = -2 * t - A * np.pi * np.sin(np.pi * t)
    minima = t[1:][(g[:-1] < 0) & (g[1:] >= 0)]
    edges = np.concatenate([[-np.inf], minima, [np.inf]])
    Z = np.trapezoid(f, t)
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (t >= lo) & (t <= hi)
        m = np.trapezoid(f[sel], t[sel])
        out.append((m / Z, np.trapezoid(f[sel] * t[sel], t[sel]) / m))
    return out


def test_oracle_basins(oracle):
    assert len(oracle.basins) == 3
    modes = oracle.modes
    assert modes[1] == pytest.approx(0.0, abs=1e-12)
    assert modes[0] == pytest.approx(-modes[2], abs=1e-12)
    ref = grid_masses()
    for b, (mass, mean) in zip(oracle.basins, ref):
        assert b.mass / oracle.Z == pytest.approx(mass, abs=1e-7)
        # the grid places basin edges to within its 1e-5 spacing
        assert b.mean == pytest.approx(mean, abs=1e-5)


def test_oracle_domains_and_expectations(oracle):
    doms = oracle.domains(2)
    assert len(doms) == 9
    total = sum(math.exp(oracle.domain_log_lambda(idx)) for idx, _ in doms)
    assert total == pytest.approx(1.0, abs=1e-12)
    ex = rastrigin_expectations(oracle, 2)
    assert ex["x"] == pytest.approx([0.0, 0.0], abs=1e-10)
    # E[e^{2X}] for one coordinate by the trapezoid rule
    t = np.linspace(-12, 12, 2_400_001)
    f = np.exp(-(t * t + 2.0 * (1 - np.cos(np.pi * t))))
    e2 = np.trapezoid(f * np.exp(2 * t), t) / np.trapezoid(f, t)
    assert ex["exp2s"] == pytest.approx(e2 ** 2, rel=1e-8)


def test_layers_and_classify(oracle):
    assert layer_of(np.zeros(4)) == 1
    assert layer_of(np.array([1.9, 0.0, -1.9, 0.0])) == 3
    assert oracle.classify(np.array([0.2, -1.5, 3.0])) == (1, 0, 2)


def test_gradient_ascent_on_quadratic():
    c = np.array([1.0, -2.0])
    x, it = gradient_ascent(lambda x: -float((x - c) @ (x - c)), lambda x: -2 * (x - c),
                            np.array([5.0, 5.0]))
    assert it > 0
    np.testing.assert_allclose(x, c, atol=1e-6)


def test_step_cap_keeps_descent_in_its_basin(oracle):
    target = RastriginTarget(1, 2.0)
    space = ContinuousSpace(target)
    rng = np.random.default_rng(0)
    for t in rng.uniform(-3.5, 3.5, 200):
        mode = space.descend(np.array([t]))
        assert oracle.classify(mode) == oracle.classify(np.array([t]))


def test_mixture_density_matches_scipy():
    space = ContinuousSpace(RastriginTarget(2, 2.0))
    reg = ModeRegistry(space, 3, (2, 2), 2)
    reg.add(np.array([0.0, 0.0]), 0.0)
    reg.add(np.array([1.9, 0.0]), -4.0)
    reg.V[0] = [[0.3, 0.1], [0.1, 0.2]]
    reg.V[1] = [[0.05, 0.0], [0.0, 0.5]]
    y = np.array([0.7, -0.4])
    ref = 0.5 * sum(stats.multivariate_normal(reg.array[k], reg.V[k] + 1e-6 * np.eye(2)).pdf(y)
                    for k in range(2))
    assert space.mixed_jump_log_density(reg, y) == pytest.approx(math.log(ref), rel=1e-10)
    reg.V[0] = [[1.0, 0.0], [0.0, 1.0]]
    reg.v_version[0] += 1                     # cached factors are refreshed
    ref = 0.5 * sum(stats.multivariate_normal(reg.array[k], reg.V[k] + 1e-6 * np.eye(2)).pdf(y)
                    for k in range(2))
    assert space.mixed_jump_log_density(reg, y) == pytest.approx(math.log(ref), rel=1e-10)


def test_mode_matching_tolerance():
    space = ContinuousSpace(RastriginTarget(2, 2.0), mode_tol=1e-3)
    reg = ModeRegistry(space, 3, (2, 2), 2)
    reg.add(np.array([0.0, 0.0]), 0.0)
    assert reg.index_of(np.array([5e-4, 0.0])) == 1
    assert reg.index_of(np.array([2e-3, 0.0])) == 0


def test_short_rastrigin_run_is_consistent(oracle):
    cfg = SamplerConfig(L=10, delta_h=2.0, kstar=20, burn_in=5_000, n_iter=40_000)
    res = rastrigin_run(2, 2.0, cfg, rep_rng(0, 0), oracle)
    assert res["lambda_sum"] == pytest.approx(1.0, abs=1e-15)
    assert res["domains_found"] >= 5
    assert np.nanmax(np.abs(res["log_lambda"] - res["true_log_lambda"])) < 1.5

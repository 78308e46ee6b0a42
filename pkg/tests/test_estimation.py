"""Weighted DR estimators against direct sums."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdsampler.core import Point
from mdsampler.estimation import DrAccumulator, EstimationError, diagnostics


def make_points(rng, n, n_domains, repeat=0.5):
    """Random chain-like sequence: a state repeats with probability ``repeat``."""
    pts, ws = [], []
    cur = None
    for _ in range(n):
        if cur is None or rng.random() > repeat:
            k = int(rng.integers(n_domains))
            cur = Point(rng.normal(size=2), 0.0, None, k, int(rng.integers(3)), 0, 0)
        pts.append(cur)
        ws.append(float(rng.normal(0.0, 30.0)) + 0.01 * len(ws))
    return pts, np.array(ws)


def direct(pts, ws, n_domains):
    mx = ws.max()
    a = np.exp(ws - mx)
    S1 = np.zeros(n_domains)
    Sx = np.zeros((n_domains, 2))
    for p, ai in zip(pts, a):
        S1[p.k] += ai
        Sx[p.k] += ai * p.x
    lam = S1 / S1.sum()
    with np.errstate(invalid="ignore"):
        mu = Sx / S1[:, None]
    return lam, mu


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31), st.integers(1, 400))
def test_accumulator_matches_direct_sums(seed, n):
    rng = np.random.default_rng(seed)
    pts, ws = make_points(rng, n, 4)
    acc = DrAccumulator(4, {"x": lambda x: x}, L=3)
    for p, w in zip(pts, ws):
        acc.accumulate(p, w)
    dr = acc.finalize()
    lam, mu = direct(pts, ws, 4)
    np.testing.assert_allclose(dr.lam, lam, rtol=1e-9, atol=1e-300)
    vis = dr.visited
    np.testing.assert_allclose(dr.mu["x"][vis], mu[vis], rtol=1e-9, atol=1e-12)
    assert math.fsum(dr.lam.tolist()) == pytest.approx(1.0, abs=2 ** -52)
    overall = sum(dr.lam[k] * dr.mu["x"][k] for k in np.flatnonzero(vis))
    np.testing.assert_allclose(dr.overall["x"], overall, rtol=0, atol=1e-15)
    assert dr.counts.sum() == n
    assert acc.cell_visits.sum() == n


def test_rising_weights_are_rescaled_not_overflowed():
    acc = DrAccumulator(2)
    p0 = Point(0.0, 0.0, None, 0, 0, 0, 0)
    p1 = Point(1.0, 0.0, None, 1, 0, 0, 0)
    for t in range(2000):
        acc.accumulate(p0 if t % 2 else p1, 2.0 * t)
    dr = acc.finalize()
    # the last weight dominates: state p0 at t = 1999, ratio e^2 per step
    assert dr.lam[0] == pytest.approx(1.0 / (1.0 + math.exp(-2.0)), rel=1e-12)


def test_merge_equals_single_pass():
    rng = np.random.default_rng(3)
    pts, ws = make_points(rng, 300, 3)
    one = DrAccumulator(3, {"x": lambda x: x})
    a = DrAccumulator(3, {"x": lambda x: x})
    b = DrAccumulator(3, {"x": lambda x: x})
    for i, (p, w) in enumerate(zip(pts, ws)):
        one.accumulate(p, w)
        (a if i < 150 else b).accumulate(p, w)
    d1 = one.finalize()
    d2 = a.merge(b).finalize()
    np.testing.assert_allclose(d1.lam, d2.lam, rtol=1e-12)
    np.testing.assert_allclose(d1.mu["x"], d2.mu["x"], rtol=1e-12)


def test_unvisited_domains_have_no_expectation():
    acc = DrAccumulator(3, {"x": lambda x: x})
    acc.accumulate(Point(np.ones(2), 0.0, None, 1, 0, 0, 0), 0.0)
    dr = acc.finalize()
    assert dr.lam.tolist() == [0.0, 1.0, 0.0]
    assert np.isnan(dr.mu["x"][0]).all() and not dr.visited[2]
    d = dr.to_dict()
    assert d["mu"]["x"]["values"][0] is None


def test_non_finite_payload_raises():
    acc = DrAccumulator(2, {"bad": lambda x: math.inf})
    acc.accumulate(Point(0.0, 0.0, None, 0, 0, 0, 0), 0.0, t=7)
    with pytest.raises(EstimationError, match="iteration 7"):
        acc.finalize()


def test_empty_accumulator_raises():
    with pytest.raises(EstimationError):
        DrAccumulator(2).finalize()


def test_diagnostics_flags():
    occ = np.ones((2, 2), dtype=np.uint8)
    good = diagnostics(1e-6, np.full((2, 2), 100), occ, V_final=np.array([np.eye(2)]),
                       w_final=np.zeros((2, 2)), snapshot=(np.zeros((2, 2)), np.array([np.eye(2)])))
    assert good.all_clear
    bad = diagnostics(0.5, np.array([[100, 1], [100, 100]]), occ,
                      V_final=np.array([np.diag([1.0, 1e-12])]))
    assert bad.flags["a"] and bad.flags["c"] and not bad.all_clear
    assert "extend run" in bad.recommendations
    moved = diagnostics(1e-6, np.full((2, 2), 100), occ, w_final=np.array([[0.0, 1.0], [0.0, 0.0]]),
                        snapshot=(np.zeros((2, 2)), np.zeros((0,))), V_final=None)
    assert moved.flags["b"]

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from lstat.adaptive import (
    NORMAL_MIN_K,
    TestReport,
    adaptive_l_test,
    cauchy_combine,
    clamp_p,
    member_p_value,
)
from lstat.bootstrap import p_value_diverging_k, p_value_fixed_k, wild_bootstrap
from lstat.core import KGrid, SampleMatrix, default_k_grid, t_statistics
from lstat.numstat import RngStream

probs = st.floats(1e-12, 1 - 1e-12)


@given(probs)
def test_single_p_round_trips(p):
    stat, out = cauchy_combine([p])
    assert stat == pytest.approx(math.tan((0.5 - p) * math.pi), rel=1e-12, abs=1e-12)
    assert out == pytest.approx(p, rel=1e-9, abs=1e-14)


@given(probs, st.integers(2, 8))
def test_equal_p_values_round_trip(p, m):
    assert cauchy_combine([p] * m)[1] == pytest.approx(p, rel=1e-8, abs=1e-13)


@given(st.lists(probs, min_size=2, max_size=8), st.randoms(use_true_random=False))
def test_permutation_invariance(ps, rnd):
    shuffled = list(ps)
    rnd.shuffle(shuffled)
    assert cauchy_combine(shuffled)[1] == pytest.approx(cauchy_combine(ps)[1], rel=1e-12, abs=1e-15)


def test_tiny_p_dominates():
    # stat ~ 0.5 / (pi * 1e-20), so the combined p is about twice the small one
    assert cauchy_combine([1e-20, 0.5])[1] == pytest.approx(2e-20, rel=1e-6)


def test_weights():
    stat, p = cauchy_combine([0.01, 0.3], weights=[0.25, 0.75])
    expected = 0.25 * math.tan(0.49 * math.pi) + 0.75 * math.tan(0.2 * math.pi)
    assert stat == pytest.approx(expected)
    assert p == pytest.approx(stats.cauchy.sf(expected), rel=1e-12)


@pytest.mark.parametrize(
    "ps, w",
    [([], None), ([0.0, 0.5], None), ([1.0], None), ([0.2, 0.3], [1.0]), ([0.2, 0.3], [0.7, 0.7]),
     ([0.2, 0.3], [1.5, -0.5])],
)
def test_combine_errors(ps, w):
    with pytest.raises(ValueError):
        cauchy_combine(ps, w)


def test_null_law_is_uniform_for_independent_inputs():
    u = np.random.default_rng(0).random((20_000, 4))
    out = np.array([cauchy_combine(row)[1] for row in u])
    assert stats.kstest(out, "uniform").statistic < 0.015


@pytest.mark.parametrize("p, B, expected", [(0.0, 99, 0.01), (1.0, 99, 0.99), (0.3, 99, 0.3)])
def test_clamp(p, B, expected):
    assert clamp_p(p, B) == pytest.approx(expected)


@pytest.fixture(scope="module")
def sample():
    rng = np.random.default_rng(3)
    return SampleMatrix(rng.standard_normal((50, 80)) + np.r_[np.full(3, 0.5), np.zeros(77)])


def test_tc_from_members(sample):
    stream = RngStream(12)
    rep = adaptive_l_test(sample, 200, 0.05, stream)
    grid = default_k_grid(80)
    dist = wild_bootstrap(sample, grid, 200, stream)
    prefix = t_statistics(sample).prefix
    members = [
        p_value_fixed_k(prefix[4], dist, 5),
        p_value_diverging_k(prefix[19], dist, 20),
        p_value_diverging_k(prefix[39], dist, 40),
    ]
    assert rep.name == "TC" and rep.meta["grid"] == [5, 20, 40]
    np.testing.assert_allclose(rep.meta["member_p"], members)
    assert rep.p_value == pytest.approx(cauchy_combine([clamp_p(v, 200) for v in members])[1])


def test_tc_reuses_distribution(sample):
    grid = KGrid((5, 10, 40))
    dist = wild_bootstrap(sample, grid, 100, RngStream(1))
    a = adaptive_l_test(sample, dist=dist, grid=grid)
    b = adaptive_l_test(sample, 100, stream=RngStream(1), grid=grid)
    assert a == b


def test_calibration_switch(sample):
    dist = wild_bootstrap(sample, KGrid((NORMAL_MIN_K - 1, NORMAL_MIN_K)), 100, RngStream(2))
    obs = 30.0
    assert member_p_value(obs, dist, NORMAL_MIN_K - 1) == p_value_fixed_k(obs, dist, NORMAL_MIN_K - 1)
    assert member_p_value(obs, dist, NORMAL_MIN_K) == p_value_diverging_k(obs, dist, NORMAL_MIN_K)


def test_report_decision_and_serialisation():
    r = TestReport("TC", 3.0, 0.05, 0.05, {"grid": [5]})
    assert r.reject and not TestReport("TC", 3.0, 0.0501, 0.05).reject
    assert json.loads(json.dumps(r.as_dict()))["reject"] is True

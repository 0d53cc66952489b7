import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from lstat.limits import (
    MAX_JOINT_K,
    b_p,
    gamma_constants,
    joint_topk_cdf,
    lambda_cdf,
    log_inv_lambda,
    sth_max_cdf,
    normal_limit_zscore,
    theorem3_zscore,
)


def intensity(x):
    return math.exp(-x / 2) / math.sqrt(math.pi)


def joint_oracle(xs):
    """Count points of the limiting Poisson process in the disjoint bins
    (x_1, inf), (x_2, x_1], ..., (x_k, x_{k-1}]; the j-th largest is below
    x_j iff the first j bins hold at most j - 1 points together."""
    k = len(xs)
    lam = [intensity(x) for x in xs]
    rates = [lam[0]] + [lam[j] - lam[j - 1] for j in range(1, k)]
    total = 0.0
    for counts in itertools.product(range(k), repeat=k):
        if all(sum(counts[: j + 1]) <= j for j in range(k)):
            total += math.prod(stats.poisson.pmf(c, r) for c, r in zip(counts, rates))
    return total


def test_lambda_at_zero():
    assert lambda_cdf(0.0) == pytest.approx(math.exp(-1 / math.sqrt(math.pi)), rel=1e-15)


def test_lambda_is_a_cdf():
    x = np.linspace(-20, 60, 1001)
    f = lambda_cdf(x)
    assert np.all(np.diff(f) >= 0)
    assert f[0] < 1e-10 and f[-1] > 1 - 1e-12


def test_b_p_value():
    assert b_p(100) == pytest.approx(2 * math.log(100) - math.log(math.log(100)))
    with pytest.raises(ValueError):
        b_p(2)


@pytest.mark.parametrize("s", [1, 2, 3, 5, 10])
@pytest.mark.parametrize("x", [-6.0, -2.0, 0.0, 2.0, 8.0])
def test_sth_max_is_poisson_cdf(x, s):
    assert sth_max_cdf(x, s) == pytest.approx(stats.poisson.cdf(s - 1, intensity(x)), rel=1e-12, abs=1e-300)


def test_first_max_is_lambda():
    for x in (-3.0, 0.0, 4.0):
        assert sth_max_cdf(x, 1) == pytest.approx(lambda_cdf(x), rel=1e-14)


def test_sth_max_extreme_arguments():
    assert sth_max_cdf(-2000.0, 3) == 0.0
    assert sth_max_cdf(2000.0, 3) == 1.0
    with pytest.raises(ValueError):
        sth_max_cdf(0.0, 0)


@given(st.floats(-20, 40), st.floats(0.01, 5), st.integers(1, 30))
def test_sth_max_monotone(x, dx, s):
    assert sth_max_cdf(x + dx, s) >= sth_max_cdf(x, s) - 1e-15
    assert sth_max_cdf(x, s + 1) >= sth_max_cdf(x, s) - 1e-15


@pytest.mark.parametrize(
    "xs",
    [(1.0, 0.0), (0.0, -1.0), (3.0, 3.0), (5.0, -2.0), (2.0, 1.0, 0.0), (4.0, 0.5, 0.5, -1.0),
     (1.0, 0.0, -0.5, -1.0, -1.5)],
)
def test_joint_matches_poisson_enumeration(xs):
    assert joint_topk_cdf(xs) == pytest.approx(joint_oracle(xs), rel=1e-10)


def test_joint_k2_closed_form():
    x1, x2 = 1.5, -0.5
    l1, l2 = intensity(x1), intensity(x2)
    assert joint_topk_cdf([x1, x2]) == pytest.approx(math.exp(-l2) * (1 + l2 - l1), rel=1e-13)


def test_joint_single_threshold_is_lambda():
    assert joint_topk_cdf([0.7]) == pytest.approx(lambda_cdf(0.7))


def test_joint_diagonal_is_lambda():
    # all of the top k below x is the same event as the maximum below x
    for k in (2, 3, 6):
        assert joint_topk_cdf([0.3] * k) == pytest.approx(lambda_cdf(0.3), rel=1e-12)


def test_joint_loose_upper_thresholds_give_marginal():
    for k in (2, 3, 5):
        xs = [300.0] * (k - 1) + [-1.0]
        assert joint_topk_cdf(xs) == pytest.approx(sth_max_cdf(-1.0, k), rel=1e-9)


def test_joint_monotone_in_each_threshold():
    base = [2.0, 1.0, 0.0]
    f0 = joint_topk_cdf(base)
    for j in range(3):
        up = list(base)
        up[j] += 0.5 if j == 0 else 0.0
        if j > 0:
            up[j] = min(up[j - 1], up[j] + 0.5)
        assert joint_topk_cdf(up) >= f0 - 1e-15


def test_joint_guards():
    with pytest.raises(ValueError):
        joint_topk_cdf([0.0, 1.0])
    with pytest.raises(ValueError):
        joint_topk_cdf([0.0] * (MAX_JOINT_K + 1))
    with pytest.raises(ValueError):
        joint_topk_cdf([])


def test_intensity_vectorised():
    np.testing.assert_allclose(log_inv_lambda([0.0, 2.0]), [intensity(0.0), intensity(2.0)])


def quad_constants(g):
    v = stats.chi2.ppf(1 - g, 1) if g < 1 else 0.0
    f = lambda x: stats.chi2.pdf(x, 1)
    m1 = integrate.quad(lambda x: x * f(x), v, np.inf, epsabs=1e-13)[0]
    e = integrate.quad(lambda x: (x - v) * f(x), v, np.inf, epsabs=1e-13)[0]
    e2 = integrate.quad(lambda x: (x - v) ** 2 * f(x), v, np.inf, epsabs=1e-13)[0]
    return v, m1 / g, e2 - e * e


@pytest.mark.parametrize("g", [0.01, 0.125, 0.25, 0.5, 0.75, 0.9, 1.0])
def test_gamma_constants_against_quadrature(g):
    v, mu, sig = quad_constants(g)
    gc = gamma_constants(g)
    assert gc.v_gamma == pytest.approx(v, rel=1e-10, abs=1e-14)
    assert gc.mu_gamma == pytest.approx(mu, rel=1e-8)
    assert gc.sigma_gg == pytest.approx(sig, rel=1e-7)
    assert gc.truncated_mean == pytest.approx(g * mu, rel=1e-8)


def test_gamma_constants_exact_points():
    gc = gamma_constants(1.0)
    assert (gc.mu_gamma, gc.sigma_gg) == (pytest.approx(1.0), pytest.approx(2.0))
    assert gamma_constants(0.5).v_gamma == pytest.approx(0.454936, abs=5e-7)


@pytest.mark.parametrize("g", [0.0, -0.1, 1.5])
def test_gamma_constants_domain(g):
    with pytest.raises(ValueError):
        gamma_constants(g)


@pytest.mark.parametrize("g", [0.1, 0.5])
def test_zscore_is_standard_for_chisq_draws(g):
    p, reps = 20_000, 400
    k = math.ceil(g * p)
    rng = np.random.default_rng(11)
    z = np.empty(reps)
    for r in range(reps):
        sq = rng.standard_normal(p) ** 2
        top = np.partition(sq, p - k)[p - k:]
        z[r] = normal_limit_zscore(top.sum(), k, p)
    assert abs(z.mean()) < 0.2
    assert z.std(ddof=1) == pytest.approx(1.0, abs=0.12)


def test_joint_extreme_lower_threshold():
    assert joint_topk_cdf([0.0, -3000.0]) == 0.0


def test_interface_alias():
    assert theorem3_zscore is normal_limit_zscore

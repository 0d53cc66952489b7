"""Baseline tests: MAX (``T_1``), SUM (``T_p``), COM and adaQ.

All of them are calibrated from the same wild-bootstrap pass as ``T_C``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adaptive import TestReport, cauchy_combine, clamp_p
from .bootstrap import (
    DEFAULT_B,
    BootstrapDistribution,
    empirical_p_value,
    p_value_diverging_k,
    p_value_fixed_k,
    wild_bootstrap,
)
from .core import KGrid, SampleMatrix, t_statistics
from .numstat import RngStream

ADAQ_POWERS = (2, 4, 6)
INF = float("inf")


@dataclass(frozen=True)
class PowerStatistic:
    r: float
    value: float


def power_statistic(x: SampleMatrix, r: float) -> PowerStatistic:
    """``L(r) = sum_i mean_i^r`` for even ``r``; ``r = inf`` gives ``max t_i^2``."""
    if r == INF:
        return PowerStatistic(INF, float(t_statistics(x).sorted_sq[0]))
    if r < 2 or r != int(r) or int(r) % 2:
        raise ValueError("finite r must be an even integer >= 2")
    return PowerStatistic(r, float(np.sum(x.moments.means ** int(r))))


def _need(dist: BootstrapDistribution, *ks: int) -> None:
    missing = [k for k in ks if k not in dist.grid]
    if missing:
        raise ValueError(f"bootstrap grid {dist.grid.ks} lacks k={missing}")


def max_test(x: SampleMatrix, dist: BootstrapDistribution, alpha: float = 0.05) -> TestReport:
    _need(dist, 1)
    stat = float(t_statistics(x).prefix[0])
    return TestReport("MAX", stat, p_value_fixed_k(stat, dist, 1), alpha,
                      {"k": 1, "B": dist.B, "seed": dist.seed, "calibration": "empirical"})


def sum_test(x: SampleMatrix, dist: BootstrapDistribution, alpha: float = 0.05) -> TestReport:
    _need(dist, x.p)
    stat = float(t_statistics(x).prefix[-1])
    return TestReport("SUM", stat, p_value_diverging_k(stat, dist, x.p), alpha,
                      {"k": x.p, "B": dist.B, "seed": dist.seed, "calibration": "bootstrap-normal"})


def com_test(x: SampleMatrix, dist: BootstrapDistribution, alpha: float = 0.05) -> TestReport:
    """Equal-weight Cauchy combination of MAX and SUM."""
    _need(dist, 1, x.p)
    prefix = t_statistics(x).prefix
    members = [
        p_value_fixed_k(float(prefix[0]), dist, 1),
        p_value_diverging_k(float(prefix[-1]), dist, x.p),
    ]
    stat, p = cauchy_combine([clamp_p(v, dist.B) for v in members])
    return TestReport("COM", stat, p, alpha,
                      {"member_p": members, "B": dist.B, "seed": dist.seed})


def adaq_member_pvalues(x: SampleMatrix, dist: BootstrapDistribution) -> list[float]:
    """p-values of ``L(2)``, ``L(4)``, ``L(6)`` and ``L(inf) = T_1``."""
    _need(dist, 1)
    means = x.moments.means
    out = []
    for r in ADAQ_POWERS:
        if r not in dist.power_replicates:
            raise ValueError(f"bootstrap pass did not record power r={r}")
        out.append(empirical_p_value(float(np.sum(means**r)), dist.power_replicates[r]))
    out.append(p_value_fixed_k(float(t_statistics(x).prefix[0]), dist, 1))
    return out


def adaq_test(
    x: SampleMatrix,
    B: int = DEFAULT_B,
    alpha: float = 0.05,
    stream: RngStream | None = None,
    *,
    dist: BootstrapDistribution | None = None,
) -> TestReport:
    """Cauchy combination of sum-of-powers tests, ``r in {2, 4, 6, inf}``.

    Without ``dist`` a fresh bootstrap pass over ``k = 1`` is run.
    """
    if dist is None:
        dist = wild_bootstrap(x, KGrid((1,)), B, stream, powers=ADAQ_POWERS)
    members = adaq_member_pvalues(x, dist)
    stat, p = cauchy_combine([clamp_p(v, dist.B) for v in members])
    return TestReport("adaQ", stat, p, alpha,
                      {"r": [2, 4, 6, "inf"], "member_p": members, "B": dist.B, "seed": dist.seed})

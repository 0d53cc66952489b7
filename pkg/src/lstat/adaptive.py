"""Cauchy combination of L-statistic p-values across sparsity levels."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .bootstrap import (
    DEFAULT_B,
    BootstrapDistribution,
    p_value_diverging_k,
    p_value_fixed_k,
    wild_bootstrap,
)
from .core import KGrid, SampleMatrix, default_k_grid, t_statistics
from .numstat import RngStream, cauchy_sf

# smallest rank whose T_k is treated as approximately normal
NORMAL_MIN_K = 20


@dataclass(frozen=True)
class TestReport:
    name: str
    statistic: float
    p_value: float
    alpha: float
    meta: dict[str, Any] = field(default_factory=dict)

    __test__ = False  # not a pytest class

    @property
    def reject(self) -> bool:
        return self.p_value <= self.alpha

    def as_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "reject": self.reject,
            "meta": self.meta,
        }


def clamp_p(p: float, B: int) -> float:
    """Keep a p-value inside ``[1/(B+1), 1 - 1/(B+1)]`` so ``tan`` stays finite."""
    lo = 1.0 / (B + 1.0)
    return min(max(p, lo), 1.0 - lo)


def cauchy_combine(
    pvals: Sequence[float], weights: Sequence[float] | None = None
) -> tuple[float, float]:
    """Combine p-values through ``sum_j w_j tan((1/2 - p_j) pi)``.

    Returns the combined statistic and its standard-Cauchy upper-tail
    p-value. ``weights`` default to equal; they must be non-negative and sum
    to one. Every p-value must lie strictly inside (0, 1).
    """
    p = np.asarray(pvals, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("need a non-empty list of p-values")
    if weights is None:
        w = np.full(p.size, 1.0 / p.size)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != p.shape:
            raise ValueError(f"{w.size} weights for {p.size} p-values")
        if np.any(w < 0) or not math.isclose(w.sum(), 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError("weights must be non-negative and sum to 1")
    if np.any(~((p > 0) & (p < 1))):
        raise ValueError("p-values must lie strictly inside (0, 1); clamp them first")
    stat = float(np.dot(w, np.tan((0.5 - p) * math.pi)))
    return stat, float(cauchy_sf(stat))


def adaptive_l_test(
    x: SampleMatrix,
    B: int = DEFAULT_B,
    alpha: float = 0.05,
    stream: RngStream | None = None,
    *,
    dist: BootstrapDistribution | None = None,
    grid: KGrid | None = None,
) -> TestReport:
    """The adaptive test ``T_C``.

    ``T_5`` is calibrated with the empirical bootstrap tail and every
    ``T_ceil(p/2^i)`` (always ``>= 20``) with the bootstrap-normal rule; the clamped p-values
    are Cauchy-combined with equal weights. Pass ``dist`` to reuse an
    existing bootstrap pass (its grid must contain ``grid``).
    """
    grid = grid if grid is not None else default_k_grid(x.p)
    if dist is None:
        dist = wild_bootstrap(x, grid, B, stream)
    panel = t_statistics(x)
    pv = tc_member_pvalues(panel.prefix, dist, grid)
    stat, p = cauchy_combine([clamp_p(v, dist.B) for v in pv])
    return TestReport(
        "TC",
        stat,
        p,
        alpha,
        meta={
            "grid": list(grid.ks),
            "member_p": [float(v) for v in pv],
            "B": dist.B,
            "seed": dist.seed,
            "calibration": f"empirical for k < {NORMAL_MIN_K}, bootstrap-normal otherwise; Cauchy",
        },
    )


def member_p_value(obs: float, dist: BootstrapDistribution, k: int) -> float:
    """Empirical tail for small ``k``, bootstrap-normal rule from ``k = 20`` on."""
    if k < NORMAL_MIN_K:
        return p_value_fixed_k(obs, dist, k)
    return p_value_diverging_k(obs, dist, k)


def tc_member_pvalues(prefix: np.ndarray, dist: BootstrapDistribution, grid: KGrid) -> list[float]:
    return [member_p_value(float(prefix[k - 1]), dist, k) for k in grid]

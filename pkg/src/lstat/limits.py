"""Closed-form limiting laws for ordered squared t-statistics.

Two regimes:

* fixed rank: the top order statistics of ``t_i^2`` centred by
  ``b_p = 2 log p - log log p`` converge to a Gumbel-type point process with
  intensity ``lambda(x) = pi^{-1/2} exp(-x/2)``, so ``Lambda(x) = exp(-lambda(x))``;
* diverging rank ``k = ceil(gamma p)``: ``T_k`` is asymptotically normal with
  centring ``p gamma mu_gamma`` and variance ``p sigma_gamma`` (diagonal
  covariance only).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .numstat import norm_pdf, norm_quantile

_INV_SQRT_PI = 1.0 / math.sqrt(math.pi)
MAX_JOINT_K = 12


def b_p(p: int) -> float:
    """Centring sequence ``2 log p - log log p`` (needs ``p >= 3``)."""
    if p < 3:
        raise ValueError("b_p needs p >= 3")
    return 2.0 * math.log(p) - math.log(math.log(p))


@dataclass(frozen=True)
class GumbelParams:
    p: int
    b_p: float

    @classmethod
    def for_p(cls, p: int) -> GumbelParams:
        return cls(p, b_p(p))


def log_inv_lambda(x):
    """``log Lambda^{-1}(x) = pi^{-1/2} exp(-x/2)``, the Poisson intensity above x."""
    return _INV_SQRT_PI * np.exp(-0.5 * np.asarray(x, dtype=float))


def lambda_cdf(x):
    out = np.exp(-log_inv_lambda(x))
    return float(out) if np.ndim(out) == 0 else out


def sth_max_cdf(x: float, s: int, p: int | None = None) -> float:
    """Limit of ``P(t^2_(p+1-s) - b_p <= x)``.

    Equal to ``P(Poisson(lambda(x)) <= s - 1)``; the terms are summed in the
    log domain so a huge intensity (very negative ``x``) cannot overflow.
    ``p`` is accepted for signature symmetry and does not enter the limit.
    """
    if s < 1:
        raise ValueError("s must be >= 1")
    log_lam = -0.5 * math.log(math.pi) - 0.5 * float(x)
    if log_lam < -745.0:
        return 1.0
    if log_lam > 709.0:
        return 0.0
    i = np.arange(s, dtype=float)
    logs = -math.exp(log_lam) + i * log_lam - special.gammaln(i + 1.0)
    return float(min(1.0, np.exp(special.logsumexp(logs))))


def joint_topk_cdf(xs: Sequence[float]) -> float:
    """Joint limit of the top-``k`` centred squared order statistics.

    ``xs`` must be non-increasing; the result is
    ``P(t^2_(p+1-j) - b_p <= xs[j-1] for j = 1..k)``. Evaluated by a pruned
    depth-first enumeration over tuples ``(k_2, ..., k_k)`` with
    ``k_2 + ... + k_j <= j - 1``; each tuple contributes
    ``Lambda(x_k) prod_i d_i^{k_i} / k_i!`` with ``d_i`` the intensity
    increment between consecutive thresholds.
    """
    xs = [float(v) for v in xs]
    k = len(xs)
    if k < 1:
        raise ValueError("need at least one threshold")
    if k > MAX_JOINT_K:
        raise ValueError(f"joint_topk_cdf is limited to k <= {MAX_JOINT_K} (got {k})")
    if any(b > a for a, b in zip(xs, xs[1:])):
        raise ValueError("thresholds must be non-increasing")
    if -0.5 * math.log(math.pi) - 0.5 * xs[-1] > 709.0:
        return 0.0
    lam = [float(v) for v in log_inv_lambda(xs)]
    lam_k = lam[-1]
    if k == 1:
        return math.exp(-lam_k)
    # log d_i for i = 2..k; -inf marks a zero increment (only k_i = 0 allowed)
    logd = []
    for i in range(1, k):
        d = lam[i] - lam[i - 1]
        logd.append(math.log(d) if d > 0 else -math.inf)

    terms: list[float] = []

    def visit(j: int, used: int, acc: float) -> None:
        # j indexes d_{j+2}; its cumulative budget is j + 1
        if j == k - 1:
            terms.append(acc)
            return
        budget = j + 1 - used
        ld = logd[j]
        visit(j + 1, used, acc)
        if ld == -math.inf:
            return
        for m in range(1, budget + 1):
            visit(j + 1, used + m, acc + m * ld - math.lgamma(m + 1))

    visit(0, 0, -lam_k)
    return float(min(1.0, math.exp(special.logsumexp(terms))))


@dataclass(frozen=True)
class GammaConstants:
    """Normal-limit constants for ``T_ceil(gamma p)`` under diagonal covariance.

    ``mu_gamma`` is the mean of a chi-square(1) variable conditional on
    exceeding ``v_gamma``, so ``gamma * mu_gamma`` is the per-coordinate
    centring; ``sigma_gg`` is ``var{(Z^2 - v_gamma) 1(Z^2 >= v_gamma)}``.
    """

    gamma: float
    z: float
    v_gamma: float
    mu_gamma: float
    sigma_gg: float

    @property
    def truncated_mean(self) -> float:
        """``E[Z^2 1(Z^2 >= v_gamma)] = gamma * mu_gamma``."""
        return self.gamma * self.mu_gamma


def gamma_constants(gamma: float) -> GammaConstants:
    g = float(gamma)
    if not 0.0 < g <= 1.0:
        raise ValueError("gamma must lie in (0, 1]")
    z = 0.0 if g == 1.0 else float(norm_quantile(1.0 - 0.5 * g))
    ph = float(norm_pdf(z))
    z2 = z * z
    trunc = 2.0 * z * ph + g
    sigma = (
        ((6.0 - 4.0 * g) * z + (4.0 * g - 2.0) * z * z2) * ph
        + 3.0 * g
        - g * g
        + 2.0 * (g * g - g) * z2
        + (g - g * g) * z2 * z2
        - 4.0 * z2 * ph * ph
    )
    return GammaConstants(gamma=g, z=z, v_gamma=z2, mu_gamma=trunc / g, sigma_gg=sigma)


def normal_limit_zscore(T_k: float, k: int, p: int, gc: GammaConstants | None = None) -> float:
    """Analytic standardisation ``(T_k - p gamma mu_gamma) / sqrt(p sigma_gamma)``.

    Valid only when the covariance is diagonal; dependent data should be
    calibrated with the bootstrap instead.
    """
    if gc is None:
        gc = gamma_constants(k / p)
    return (T_k - p * gc.truncated_mean) / math.sqrt(p * gc.sigma_gg)


# name used by the published interface
theorem3_zscore = normal_limit_zscore

"""Wild (Rademacher) bootstrap of the full L-statistic panel.

Each replicate flips the signs of the centred rows, recomputes the column
means and variances (full re-studentisation) and records ``T*_k`` for every
``k`` in the grid, plus the sums of even powers of the replicate means used
by the adaQ competitor. Because ``xi_i^2 = 1`` the replicate sum of squares
about zero equals that of the centred data, so a block of replicates costs
one matrix product and one row-wise sort.

Replicates are generated in fixed-size blocks; block ``j`` draws its signs
from ``stream.derive(j)``. Results are therefore identical for any number of
workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._pool import ordered_map
from .core import KGrid, SampleMatrix, top_k_sums
from .numstat import RngStream, norm_sf, rademacher

BLOCK = 64
DEFAULT_B = 500
DEFAULT_POWERS = (2, 4, 6)


class CalibrationError(ValueError):
    """Bootstrap output unusable for calibration (e.g. zero variance)."""


@dataclass(frozen=True)
class BootstrapDistribution:
    """Joint bootstrap law of ``T*_k`` over a k-grid.

    Attributes
    ----------
    replicates : ndarray, shape (B, len(grid))
        Column ``j`` holds the bootstrap sample of ``T_{grid[j]}``.
    per_k_mean, per_k_var : ndarray, shape (len(grid),)
        Column means and ``B - 1`` divisor variances.
    power_replicates : dict
        Even power ``r`` -> bootstrap sample of ``sum_i mean_i^r``.
    """

    B: int
    grid: KGrid
    replicates: np.ndarray
    per_k_mean: np.ndarray
    per_k_var: np.ndarray
    seed: int
    stream_id: int = 0
    power_replicates: dict[int, np.ndarray] = field(default_factory=dict)

    def column(self, k: int) -> np.ndarray:
        return self.replicates[:, self.grid.index(k)]


def _block_panel(
    centered: np.ndarray,
    sumsq: np.ndarray,
    signs: np.ndarray,
    ks: Sequence[int],
    powers: Sequence[int],
) -> tuple[np.ndarray, dict[int, np.ndarray]]:
    n = centered.shape[0]
    means = signs @ centered
    means /= n
    msq = means * means
    var = (sumsq - n * msq) / (n - 1)
    if np.any(~(var > 0)):
        raise CalibrationError("a bootstrap replicate produced a zero-variance column")
    tsq = n * msq / var
    pw: dict[int, np.ndarray] = {}
    if powers:
        acc = msq.copy()
        for r in range(2, max(powers) + 1, 2):
            if r > 2:
                acc *= msq
            if r in powers:
                pw[r] = acc.sum(axis=1)
    return top_k_sums(tsq, ks), pw


def wild_bootstrap(
    x: SampleMatrix,
    grid: KGrid,
    B: int = DEFAULT_B,
    stream: RngStream | None = None,
    *,
    powers: Sequence[int] = DEFAULT_POWERS,
    workers: int | None = 1,
) -> BootstrapDistribution:
    """Run ``B`` wild-bootstrap replicates of the L-statistic panel.

    Parameters
    ----------
    x : SampleMatrix
    grid : KGrid
        Ranks ``k`` to record; every entry must be ``<= p``.
    B : int
        Number of replicates (at least 20).
    stream : RngStream
        Source of the Rademacher multipliers; defaults to seed 0.
    powers : sequence of even int
        Power sums of the replicate means to record as well.
    workers : int or None
        Thread count for replicate blocks; ``None`` uses all cores. The output
        does not depend on it.
    """
    if B < 20:
        raise ValueError(f"B must be at least 20, got {B}")
    grid.check(x.p)
    if any(r < 2 or r % 2 for r in powers):
        raise ValueError("powers must be even integers >= 2")
    stream = stream if stream is not None else RngStream(0)
    powers = tuple(sorted(set(powers)))
    centered = x.data - x.moments.means
    sumsq = np.einsum("ij,ij->j", centered, centered)
    n = x.n
    ks = grid.ks
    starts = list(range(0, B, BLOCK))

    def run(j: int):
        size = min(BLOCK, B - starts[j])
        signs = rademacher(stream.derive(j), (size, n))
        return _block_panel(centered, sumsq, signs, ks, powers)

    parts = list(ordered_map(run, len(starts), workers))

    reps = np.vstack([p[0] for p in parts])
    pw = {r: np.concatenate([p[1][r] for p in parts]) for r in powers}
    mean = reps.mean(axis=0)
    var = reps.var(axis=0, ddof=1)
    for a in (reps, mean, var, *pw.values()):
        a.setflags(write=False)
    return BootstrapDistribution(
        B=B,
        grid=grid,
        replicates=reps,
        per_k_mean=mean,
        per_k_var=var,
        seed=stream.seed,
        stream_id=stream.stream_id,
        power_replicates=pw,
    )


def empirical_p_value(observed: float, sample: np.ndarray) -> float:
    """Right-tail bootstrap p-value ``(1 + #{sample >= observed}) / (B + 1)``."""
    sample = np.asarray(sample)
    return (1.0 + np.count_nonzero(sample >= observed)) / (sample.size + 1.0)


def p_value_fixed_k(observed: float, dist: BootstrapDistribution, k: int) -> float:
    return empirical_p_value(observed, dist.column(k))


def p_value_diverging_k(observed: float, dist: BootstrapDistribution, k: int) -> float:
    """Normal-calibrated p-value from the bootstrap mean and variance of ``T*_k``."""
    j = dist.grid.index(k)
    var = dist.per_k_var[j]
    if not var > 0:
        raise CalibrationError(f"bootstrap variance of T*_{k} is not positive")
    return float(norm_sf((observed - dist.per_k_mean[j]) / math.sqrt(var)))

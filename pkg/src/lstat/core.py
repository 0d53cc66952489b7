"""Sample matrices, per-variable t-statistics and the L-statistic panel.

The L-statistic ``T_k`` is the sum of the ``k`` largest squared t-statistics.
A single descending sort plus prefix sums answers every ``k`` in O(1), which
is what both the adaptive test and the bootstrap rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class DegenerateColumnError(ValueError):
    """A column has zero (or negative, through round-off) sample variance."""


@dataclass(frozen=True)
class ColumnMoments:
    means: np.ndarray
    variances: np.ndarray


class SampleMatrix:
    """An ``n x p`` observation matrix (rows are observations).

    Validation happens at construction: ``n >= 4``, ``p >= 1``, every entry
    finite, and every column with strictly positive sample variance. The
    column moments are computed once and cached.
    """

    def __init__(self, data, *, copy: bool = True) -> None:
        arr = np.array(data, dtype=np.float64, copy=copy)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
        n, p = arr.shape
        if n < 4:
            raise ValueError(f"need at least 4 observations, got n={n}")
        if p < 1:
            raise ValueError("need at least one variable")
        if not np.all(np.isfinite(arr)):
            raise ValueError("data contains non-finite entries")
        arr.setflags(write=False)
        self._data = arr
        self._moments = _moments(arr)

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def n(self) -> int:
        return self._data.shape[0]

    @property
    def p(self) -> int:
        return self._data.shape[1]

    @property
    def moments(self) -> ColumnMoments:
        return self._moments

    def __repr__(self) -> str:
        return f"SampleMatrix(n={self.n}, p={self.p})"


def _moments(arr: np.ndarray) -> ColumnMoments:
    n = arr.shape[0]
    means = arr.mean(axis=0)
    centered = arr - means
    variances = np.einsum("ij,ij->j", centered, centered) / (n - 1)
    bad = np.flatnonzero(~(variances > 0))
    if bad.size:
        raise DegenerateColumnError(
            f"{bad.size} column(s) have zero sample variance (first: column {bad[0]})"
        )
    means.setflags(write=False)
    variances.setflags(write=False)
    return ColumnMoments(means, variances)


def column_moments(x: SampleMatrix) -> ColumnMoments:
    """Column means and unbiased (divisor ``n - 1``) variances."""
    return x.moments


@dataclass(frozen=True)
class TStatPanel:
    """t-statistics with their descending-sorted squares and prefix sums.

    ``prefix[k - 1]`` is ``T_k``.
    """

    t: np.ndarray
    sorted_sq: np.ndarray
    prefix: np.ndarray

    @property
    def p(self) -> int:
        return self.t.shape[0]

    def l_statistic(self, k: int) -> float:
        return l_statistic(self, k)


def t_statistics(x: SampleMatrix) -> TStatPanel:
    m = x.moments
    t = math.sqrt(x.n) * m.means / np.sqrt(m.variances)
    sorted_sq = np.sort(t * t)[::-1].copy()
    prefix = np.cumsum(sorted_sq)
    for a in (t, sorted_sq, prefix):
        a.setflags(write=False)
    return TStatPanel(t, sorted_sq, prefix)


def l_statistic(panel: TStatPanel, k: int) -> float:
    if not 1 <= k <= panel.p:
        raise ValueError(f"k must lie in [1, {panel.p}], got {k}")
    return float(panel.prefix[k - 1])


def top_k_sums(tsq: np.ndarray, ks: Sequence[int]) -> np.ndarray:
    """``T_k`` for each ``k`` in ``ks``, row-wise over a batch of squared t's.

    Parameters
    ----------
    tsq : ndarray, shape (B, p)
        Squared t-statistics, one row per replicate.
    ks : sequence of int
        Strictly increasing values in ``[1, p]``.

    Returns
    -------
    ndarray, shape (B, len(ks))
    """
    ks = np.asarray(ks, dtype=np.intp)
    srt = np.sort(tsq, axis=1)[:, ::-1]
    prefix = np.cumsum(srt, axis=1)
    return prefix[:, ks - 1]


@dataclass(frozen=True)
class KGrid:
    ks: tuple[int, ...]

    def __post_init__(self) -> None:
        ks = tuple(int(k) for k in self.ks)
        if not ks:
            raise ValueError("k-grid must be non-empty")
        if ks[0] < 1 or any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError(f"k-grid must be strictly increasing positive integers: {ks}")
        object.__setattr__(self, "ks", ks)

    @classmethod
    def from_values(cls, values: Iterable[int]) -> KGrid:
        """Sorted, deduplicated grid from arbitrary positive integers."""
        return cls(tuple(sorted({int(v) for v in values})))

    def check(self, p: int) -> None:
        if self.ks[-1] > p:
            raise ValueError(f"k-grid entry {self.ks[-1]} exceeds p={p}")

    def index(self, k: int) -> int:
        try:
            return self.ks.index(int(k))
        except ValueError:
            raise KeyError(f"k={k} is not in the grid {self.ks}") from None

    def __contains__(self, k: object) -> bool:
        return k in self.ks

    def __iter__(self):
        return iter(self.ks)

    def __len__(self) -> int:
        return len(self.ks)


def n_diverging(p: int) -> int:
    """Number of halving levels ``K = floor(log(p/20) / log 2)``."""
    # integer search avoids log round-off right at powers of two
    K = 0
    while 20 * 2 ** (K + 1) <= p:
        K += 1
    return K


def default_k_grid(p: int) -> KGrid:
    """``{5} U {ceil(p / 2^i) : i = 1..K}`` for ``p >= 40``."""
    if p < 40:
        raise ValueError(f"default k-grid needs p >= 40 (got p={p}); pass an explicit grid")
    K = n_diverging(p)
    return KGrid.from_values([5] + [-(-p // 2**i) for i in range(1, K + 1)])

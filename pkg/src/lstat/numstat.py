"""Special functions and the deterministic random-number contract.

Every random draw in the package goes through :class:`RngStream`. A stream is
a ``(seed, stream_id)`` pair keying a Philox counter-based generator, so a
stream's sequence depends only on the pair and never on which worker thread
consumes it. Child streams are derived by hashing, never by sharing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class RngStream:
    """A reproducible, independently keyed random stream.

    Parameters
    ----------
    seed : int
        Master seed (64-bit unsigned).
    stream_id : int
        Sub-stream index (64-bit unsigned). Distinct ids give independent
        Philox key spaces.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not (0 <= int(v) <= _MASK64):
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {v}")

    def derive(self, index: int) -> RngStream:
        """Child stream for task ``index``; pure function of (self, index)."""
        child = _splitmix64(self.stream_id ^ _splitmix64(int(index) & _MASK64))
        return RngStream(self.seed, child)

    def generator(self) -> np.random.Generator:
        key = (int(self.stream_id) << 64) | int(self.seed)
        return np.random.Generator(np.random.Philox(key=key))


def norm_pdf(x):
    return np.exp(-0.5 * np.square(x)) / math.sqrt(2.0 * math.pi)


def norm_cdf(x):
    return special.ndtr(x)


def norm_sf(x):
    """Upper tail 1 - Phi(x), accurate far into the right tail."""
    return special.ndtr(-np.asarray(x, dtype=float))


def norm_quantile(q):
    """Lower-tail inverse of the standard normal CDF.

    Raises
    ------
    ValueError
        If any ``q`` lies outside the open interval (0, 1).
    """
    qa = np.asarray(q, dtype=float)
    if np.any(~((qa > 0.0) & (qa < 1.0))):
        raise ValueError("norm_quantile requires 0 < q < 1")
    out = special.ndtri(qa)
    return float(out) if out.ndim == 0 else out


def chisq_cdf(x, df: int):
    """Regularized lower incomplete gamma ``P(df/2, x/2)``."""
    xa = np.asarray(x, dtype=float)
    if df < 1 or int(df) != df:
        raise ValueError("chisq_cdf requires a positive integer df")
    if np.any(xa < 0):
        raise ValueError("chisq_cdf requires x >= 0")
    out = special.gammainc(0.5 * df, 0.5 * xa)
    return float(out) if out.ndim == 0 else out


def chisq_sf(x, df: int):
    """Upper tail of chi-square; used for Ljung-Box p-values."""
    xa = np.asarray(x, dtype=float)
    if df < 1 or int(df) != df:
        raise ValueError("chisq_sf requires a positive integer df")
    if np.any(xa < 0):
        raise ValueError("chisq_sf requires x >= 0")
    out = special.gammaincc(0.5 * df, 0.5 * xa)
    return float(out) if out.ndim == 0 else out


def cauchy_cdf(x):
    return 0.5 + np.arctan(x) / math.pi


def cauchy_sf(x):
    # arctan form keeps precision for large positive x, where 1 - cdf cancels
    xa = np.asarray(x, dtype=float)
    out = np.where(xa > 0, np.arctan2(1.0, xa) / math.pi, 0.5 - np.arctan(xa) / math.pi)
    return float(out) if out.ndim == 0 else out


def rademacher(stream: RngStream, n: int | tuple[int, ...]) -> np.ndarray:
    """Draw iid +/-1 signs (as float64) from ``stream``."""
    shape = (n,) if isinstance(n, (int, np.integer)) else tuple(n)
    if any(d < 1 for d in shape):
        raise ValueError("rademacher requires positive sizes")
    bits = stream.generator().integers(0, 2, size=shape, dtype=np.int8)
    return bits.astype(np.float64) * 2.0 - 1.0

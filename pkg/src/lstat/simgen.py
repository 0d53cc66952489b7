"""Synthetic data ``X_i = mu + Sigma^{1/2} eps_i`` with AR(1) covariance."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .core import SampleMatrix
from .numstat import RngStream

INNOVATIONS = ("normal", "t3", "mixnormal")


def default_kappa(n: int, p: int, s: int) -> float:
    """Signal size ``3 sqrt(log p / (n s))``; zero when ``s = 0``."""
    return 0.0 if s == 0 else 3.0 * math.sqrt(math.log(p) / (n * s))


@dataclass(frozen=True)
class SimConfig:
    n: int
    p: int
    rho: float = 0.5
    innovation: str = "normal"
    s: int = 0
    kappa: float | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 4 or self.p < 1:
            raise ValueError(f"need n >= 4 and p >= 1, got n={self.n}, p={self.p}")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        if self.innovation not in INNOVATIONS:
            raise ValueError(f"innovation must be one of {INNOVATIONS}")
        if not 0 <= self.s <= self.p:
            raise ValueError("sparsity s must lie in [0, p]")
        if self.kappa is not None and self.kappa < 0:
            raise ValueError("kappa must be non-negative")

    @property
    def signal(self) -> float:
        """Effective per-coordinate mean (``kappa`` or its default)."""
        if self.s == 0:
            return 0.0
        return default_kappa(self.n, self.p, self.s) if self.kappa is None else self.kappa

    def with_sparsity(self, s: int) -> SimConfig:
        return replace(self, s=s)


@dataclass(frozen=True)
class CovFactor:
    p: int
    rho: float
    factor: np.ndarray

    @property
    def sigma(self) -> np.ndarray:
        return ar1_cov(self.p, self.rho)


def ar1_cov(p: int, rho: float) -> np.ndarray:
    idx = np.arange(p)
    return float(rho) ** np.abs(idx[:, None] - idx[None, :])


@lru_cache(maxsize=16)
def ar1_sqrt(p: int, rho: float) -> CovFactor:
    """Symmetric positive-definite square root of ``(rho^|i-j|)``."""
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1)")
    if rho == 0.0:
        f = np.eye(p)
    else:
        w, v = np.linalg.eigh(ar1_cov(p, rho))
        if w.min() <= 0:
            raise np.linalg.LinAlgError("AR(1) covariance is not positive definite")
        f = (v * np.sqrt(w)) @ v.T
        f = 0.5 * (f + f.T)
    f.setflags(write=False)
    return CovFactor(p, float(rho), f)


def draw_innovations(cfg: SimConfig, stream: RngStream) -> np.ndarray:
    """``n x p`` iid innovations with mean 0 and variance 1."""
    rng = stream.generator()
    shape = (cfg.n, cfg.p)
    if cfg.innovation == "normal":
        return rng.standard_normal(shape)
    if cfg.innovation == "t3":
        # t(3)/sqrt(3) = Z / sqrt(chi2_3)
        z = rng.standard_normal(shape)
        return z / np.sqrt(rng.chisquare(3.0, shape))
    # [0.9 N(0,1) + 0.1 N(0,9)] / sqrt(1.8)
    z = rng.standard_normal(shape)
    wide = rng.random(shape) < 0.1
    return np.where(wide, 3.0 * z, z) / math.sqrt(1.8)


def make_mu(cfg: SimConfig) -> np.ndarray:
    mu = np.zeros(cfg.p)
    mu[: cfg.s] = cfg.signal
    return mu


def generate(cfg: SimConfig, stream: RngStream) -> SampleMatrix:
    eps = draw_innovations(cfg, stream)
    x = eps @ ar1_sqrt(cfg.p, cfg.rho).factor
    if cfg.s:
        x += make_mu(cfg)
    return SampleMatrix(x, copy=False)

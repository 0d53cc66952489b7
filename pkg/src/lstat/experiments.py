"""Monte-Carlo size and size-corrected power studies.

Replicate ``m`` of a study draws its data from ``stream.derive(m).derive(0)``
and its bootstrap multipliers from ``stream.derive(m).derive(1)``, so every
cell of the output is a pure function of the master seed whatever the worker
count. Work is flattened onto one pool over replicates; the bootstrap inside
a replicate runs serially.
"""

from __future__ import annotations

import csv
import json
import math
import platform
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from ._pool import ordered_map
from .battery import Battery
from .bootstrap import DEFAULT_B
from .numstat import RngStream
from .simgen import SimConfig, generate

CSV_FIELDS = ("n", "p", "innovation", "rho", "test", "s", "kappa",
              "rejections", "reps", "rate", "se", "corrected")


def simulate_pvalues(
    template: SimConfig,
    tests: Sequence[str] | Battery,
    M: int,
    stream: RngStream,
    *,
    B: int = DEFAULT_B,
    workers: int | None = 1,
    progress: Callable[[int, int], None] | None = None,
) -> np.ndarray:
    """p-values of every test on ``M`` simulated datasets, shape ``(M, n_tests)``."""
    battery = tests if isinstance(tests, Battery) else Battery(tests)
    battery.grid(template.p)  # fail fast on impossible ranks

    def one(m: int) -> np.ndarray:
        rep = stream.derive(m)
        x = generate(template, rep.derive(0))
        dist = battery.bootstrap(x, B, rep.derive(1))
        return battery.p_values(x, dist)

    out = np.empty((M, len(battery.specs)))
    for m, row in enumerate(ordered_map(one, M, workers)):
        out[m] = row
        if progress:
            progress(m + 1, M)
    return out


def _cell(cfg: SimConfig, test: str, rej: int, M: int, se: float, corrected: bool) -> dict:
    return {
        "n": cfg.n, "p": cfg.p, "innovation": cfg.innovation, "rho": cfg.rho,
        "test": test, "s": cfg.s, "kappa": cfg.signal,
        "rejections": int(rej), "reps": M, "rate": rej / M, "se": se,
        "corrected": corrected,
    }


@dataclass
class SizeStudy:
    rows: list[dict]
    pvalues: np.ndarray
    labels: list[str]

    def rate(self, test: str) -> float:
        return next(r["rate"] for r in self.rows if r["test"] == test)


def run_size_study(
    template: SimConfig,
    tests: Sequence[str],
    M: int,
    alpha: float,
    stream: RngStream,
    *,
    B: int = DEFAULT_B,
    workers: int | None = 1,
    pvalues: np.ndarray | None = None,
) -> SizeStudy:
    """Empirical rejection rates under the null at nominal level ``alpha``.

    ``pvalues`` may carry a previously simulated ``(M, n_tests)`` matrix.
    """
    if template.s != 0:
        raise ValueError("size study needs a null template (s = 0)")
    if M < 1:
        raise ValueError("M must be positive")
    if pvalues is None:
        pvalues = simulate_pvalues(template, tests, M, stream, B=B, workers=workers)
    M = pvalues.shape[0]
    se = math.sqrt(alpha * (1 - alpha) / M)
    rej = (pvalues <= alpha).sum(axis=0)
    rows = [_cell(template, t, int(r), M, se, False) for t, r in zip(tests, rej)]
    return SizeStudy(rows, pvalues, list(tests))


def thresholds_from_null(pvalues: np.ndarray, tests: Sequence[str], alpha: float) -> dict[str, float]:
    """Per-test ``alpha``-quantile of null p-values (inverted-CDF rule)."""
    q = np.quantile(pvalues, alpha, axis=0, method="inverted_cdf")
    return {t: float(v) for t, v in zip(tests, np.atleast_1d(q))}


def empirical_critical_values(
    template: SimConfig,
    tests: Sequence[str],
    M0: int,
    alpha: float,
    stream: RngStream,
    *,
    B: int = DEFAULT_B,
    workers: int | None = 1,
) -> dict[str, float]:
    """p-value thresholds giving each test empirical size ``alpha`` under the null."""
    if template.s != 0:
        raise ValueError("critical values need a null template (s = 0)")
    pv = simulate_pvalues(template, tests, M0, stream, B=B, workers=workers)
    return thresholds_from_null(pv, tests, alpha)


@dataclass
class PowerCurve:
    scenario: SimConfig
    tests: list[str]
    sparsity_grid: list[int]
    estimates: np.ndarray  # (len(tests), len(sparsity_grid))
    rejections: np.ndarray
    mc_reps: int
    corrected: bool
    thresholds: dict[str, float] = field(default_factory=dict)

    def power(self, test: str, s: int) -> float:
        return float(self.estimates[self.tests.index(test), self.sparsity_grid.index(s)])

    def curve(self, test: str) -> np.ndarray:
        return self.estimates[self.tests.index(test)]

    def rows(self) -> list[dict]:
        out = []
        for j, s in enumerate(self.sparsity_grid):
            cfg = self.scenario.with_sparsity(s)
            for i, t in enumerate(self.tests):
                rate = self.estimates[i, j]
                se = math.sqrt(rate * (1 - rate) / self.mc_reps)
                out.append(_cell(cfg, t, int(self.rejections[i, j]), self.mc_reps, se, self.corrected))
        return out


def run_power_sweep(
    template: SimConfig,
    tests: Sequence[str],
    sparsity_grid: Sequence[int],
    M: int,
    thresholds: dict[str, float] | float,
    stream: RngStream,
    *,
    B: int = DEFAULT_B,
    workers: int | None = 1,
    progress: Callable[[int, int], None] | None = None,
) -> PowerCurve:
    """Rejection rates over sparsity levels.

    ``thresholds`` maps each test to its p-value cut-off (from
    :func:`empirical_critical_values`); a bare float applies a nominal level
    to all tests and marks the curve uncorrected. Level ``s`` uses
    ``stream.derive(s)``.
    """
    tests = list(tests)
    corrected = not isinstance(thresholds, (int, float))
    cut = np.array([thresholds[t] for t in tests]) if corrected else np.full(len(tests), float(thresholds))
    grid = [int(s) for s in sparsity_grid]
    rej = np.zeros((len(tests), len(grid)), dtype=np.int64)
    battery = Battery(tests)
    for j, s in enumerate(grid):
        cfg = template.with_sparsity(s)
        pv = simulate_pvalues(cfg, battery, M, stream.derive(s), B=B, workers=workers)
        rej[:, j] = (pv <= cut).sum(axis=0)
        if progress:
            progress(j + 1, len(grid))
    return PowerCurve(
        scenario=template, tests=tests, sparsity_grid=grid, estimates=rej / M,
        rejections=rej, mc_reps=M, corrected=corrected,
        thresholds=dict(zip(tests, map(float, cut))),
    )


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(rows: Iterable[dict], path, fields: Sequence[str] = CSV_FIELDS) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(r[f]) for f in fields])


def versions() -> dict[str, str]:
    import scipy

    from . import __version__

    return {"lstat": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def write_manifest(path, **fields) -> dict:
    data = {**fields, "versions": versions()}

    def default(o):
        if isinstance(o, SimConfig):
            return asdict(o)
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(f"cannot serialise {type(o).__name__}")

    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=default)
        fh.write("\n")
    return data

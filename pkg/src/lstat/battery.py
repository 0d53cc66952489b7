"""Named tests evaluated from one shared bootstrap pass.

Recognised names::

    TC            adaptive Cauchy combination over the default k-grid
    MAX, SUM      T_1 and T_p
    COM, adaQ     competitor combinations
    T<k>          T_k for an integer k, e.g. T5
    T<g>p         T_ceil(g p), e.g. T0.25p
    Tp/<m>        T_ceil(p / m), e.g. Tp/8
    Tp            T_p

``T_k`` with ``k < 20`` is calibrated by the empirical bootstrap tail,
otherwise by the bootstrap-normal rule.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .adaptive import NORMAL_MIN_K, TestReport, cauchy_combine, clamp_p, member_p_value
from .bootstrap import DEFAULT_B, BootstrapDistribution, wild_bootstrap
from .competitors import ADAQ_POWERS, adaq_member_pvalues
from .core import KGrid, SampleMatrix, default_k_grid, t_statistics
from .numstat import RngStream

COMBINED = ("TC", "COM", "adaQ")


@dataclass(frozen=True)
class TestSpec:
    label: str
    kind: str  # "lstat" | "TC" | "COM" | "adaQ"
    rank: Callable[[int], int] | None = None

    __test__ = False

    def ks(self, p: int, tc_grid: KGrid | None = None) -> list[int]:
        if self.kind == "lstat":
            return [self.rank(p)]
        if self.kind == "TC":
            return list((tc_grid or default_k_grid(p)).ks)
        if self.kind == "COM":
            return [1, p]
        return [1]


_FRAC = re.compile(r"^T(\d*\.\d+|\d+\.?\d*)p$")
_DIV = re.compile(r"^Tp/(\d+)$")
_INT = re.compile(r"^T(\d+)$")


def parse_test(name: str) -> TestSpec:
    name = name.strip()
    if name in COMBINED:
        return TestSpec(name, name)
    if name == "MAX":
        return TestSpec(name, "lstat", lambda p: 1)
    if name in ("SUM", "Tp"):
        return TestSpec(name, "lstat", lambda p: p)
    if m := _INT.match(name):
        k = int(m.group(1))
        if k < 1:
            raise ValueError(f"bad test name {name!r}: k must be >= 1")
        return TestSpec(name, "lstat", lambda p, k=k: k)
    if m := _FRAC.match(name):
        g = float(m.group(1))
        if not 0 < g <= 1:
            raise ValueError(f"bad test name {name!r}: fraction must lie in (0, 1]")
        # round before ceil so 0.1*p style products do not pick up an ulp
        return TestSpec(name, "lstat", lambda p, g=g: max(1, math.ceil(round(g * p, 9))))
    if m := _DIV.match(name):
        d = int(m.group(1))
        if d < 1:
            raise ValueError(f"bad test name {name!r}")
        return TestSpec(name, "lstat", lambda p, d=d: -(-p // d))
    raise ValueError(
        f"unknown test {name!r}; expected TC, MAX, SUM, COM, adaQ, T<k>, T<g>p or Tp/<m>"
    )


class Battery:
    """A fixed list of tests sharing one bootstrap pass per dataset.

    ``tc_grid`` replaces the default k-grid of ``TC`` (required when
    ``p < 40``).
    """

    def __init__(self, names: Sequence[str], tc_grid: KGrid | None = None) -> None:
        if not names:
            raise ValueError("no tests requested")
        self.tc_grid = tc_grid
        self.specs = [parse_test(n) for n in names]
        labels = [s.label for s in self.specs]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate test names in {labels}")

    @property
    def labels(self) -> list[str]:
        return [s.label for s in self.specs]

    def grid(self, p: int) -> KGrid:
        ks = set()
        for s in self.specs:
            ks.update(s.ks(p, self.tc_grid))
        grid = KGrid.from_values(ks)
        grid.check(p)
        return grid

    def powers(self) -> tuple[int, ...]:
        return ADAQ_POWERS if any(s.kind == "adaQ" for s in self.specs) else ()

    def bootstrap(
        self, x: SampleMatrix, B: int, stream: RngStream, workers: int | None = 1
    ) -> BootstrapDistribution:
        return wild_bootstrap(x, self.grid(x.p), B, stream, powers=self.powers(), workers=workers)

    def evaluate(self, x: SampleMatrix, dist: BootstrapDistribution) -> list[tuple[float, float, dict]]:
        """``(statistic, p_value, meta)`` for each test, in order."""
        prefix = t_statistics(x).prefix
        p = x.p
        out = []
        for s in self.specs:
            if s.kind == "lstat":
                k = s.rank(p)
                stat = float(prefix[k - 1])
                calib = "empirical" if k < NORMAL_MIN_K else "bootstrap-normal"
                out.append((stat, member_p_value(stat, dist, k), {"k": k, "calibration": calib}))
            elif s.kind == "TC":
                grid = self.tc_grid or default_k_grid(p)
                members = [member_p_value(float(prefix[k - 1]), dist, k) for k in grid]
                stat, pv = cauchy_combine([clamp_p(v, dist.B) for v in members])
                out.append((stat, pv, {"grid": list(grid.ks), "member_p": members}))
            elif s.kind == "COM":
                members = [member_p_value(float(prefix[0]), dist, 1),
                           member_p_value(float(prefix[-1]), dist, p)]
                stat, pv = cauchy_combine([clamp_p(v, dist.B) for v in members])
                out.append((stat, pv, {"member_p": members}))
            else:
                members = adaq_member_pvalues(x, dist)
                stat, pv = cauchy_combine([clamp_p(v, dist.B) for v in members])
                out.append((stat, pv, {"r": [2, 4, 6, "inf"], "member_p": members}))
        return out

    def p_values(self, x: SampleMatrix, dist: BootstrapDistribution) -> np.ndarray:
        return np.array([r[1] for r in self.evaluate(x, dist)])

    def reports(self, x: SampleMatrix, dist: BootstrapDistribution, alpha: float) -> list[TestReport]:
        base = {"B": dist.B, "seed": dist.seed, "stream_id": dist.stream_id}
        return [
            TestReport(s.label, stat, pv, alpha, {**base, **meta})
            for s, (stat, pv, meta) in zip(self.specs, self.evaluate(x, dist))
        ]


def run_tests(
    x: SampleMatrix,
    names: Sequence[str],
    B: int = DEFAULT_B,
    alpha: float = 0.05,
    stream: RngStream | None = None,
    *,
    tc_grid: KGrid | None = None,
    workers: int | None = 1,
) -> list[TestReport]:
    """Run every named test on ``x`` from a single bootstrap pass."""
    battery = Battery(names, tc_grid)
    stream = stream if stream is not None else RngStream(0)
    dist = battery.bootstrap(x, B, stream, workers)
    return battery.reports(x, dist, alpha)

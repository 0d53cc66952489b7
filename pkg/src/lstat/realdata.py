"""Excess-return pipeline: ingest, Ljung-Box screening, tests, BH discoveries,
and the subsample rejection-rate study.

Input formats
-------------
returns CSV : ``date,<TICKER1>,<TICKER2>,...`` one row per period
risk-free CSV : ``date,rate``

Both UTF-8 with ``.`` decimals; dates are matched as exact strings and rows
are ordered by date string (ISO dates sort chronologically).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from ._pool import ordered_map
from .battery import Battery
from .bootstrap import DEFAULT_B
from .core import SampleMatrix
from .numstat import RngStream, chisq_sf

log = logging.getLogger(__name__)

DEFAULT_LAG = 10
MISSING = {"", "na", "nan", "null", "none"}


class DataFormatError(ValueError):
    """Malformed input file; the message carries file and line."""


@dataclass(frozen=True)
class ReturnsPanel:
    dates: list[str]
    tickers: list[str]
    returns: np.ndarray  # (T, p)
    riskfree: np.ndarray  # (T,)
    dropped_rows: int = 0

    def __post_init__(self) -> None:
        T = len(self.dates)
        if self.returns.shape != (T, len(self.tickers)) or self.riskfree.shape != (T,):
            raise ValueError("panel shapes are inconsistent")
        if T < 30:
            raise ValueError(f"need at least 30 periods, got {T}")

    @property
    def T(self) -> int:
        return len(self.dates)

    @property
    def p(self) -> int:
        return len(self.tickers)

    @property
    def excess(self) -> np.ndarray:
        return self.returns - self.riskfree[:, None]

    def select(self, tickers: Sequence[str]) -> ReturnsPanel:
        idx = [self.tickers.index(t) for t in tickers]
        return ReturnsPanel(self.dates, list(tickers), self.returns[:, idx], self.riskfree,
                            self.dropped_rows)


def _parse_float(tok: str, path, line: int) -> float:
    if tok.strip().lower() in MISSING:
        return math.nan
    try:
        return float(tok)
    except ValueError:
        raise DataFormatError(f"{path}:{line}: cannot parse {tok!r} as a number") from None


def _read_table(path, min_cols: int) -> tuple[list[str], dict[str, list[float]]]:
    rows: dict[str, list[float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}:1: empty file") from None
        header = [h.strip() for h in header]
        if len(header) < min_cols or header[0].lower() != "date":
            raise DataFormatError(f"{path}:1: header must start with 'date' and have {min_cols}+ columns")
        for line, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataFormatError(f"{path}:{line}: expected {len(header)} fields, got {len(rec)}")
            date = rec[0].strip()
            if date in rows:
                raise DataFormatError(f"{path}:{line}: duplicate date {date!r}")
            rows[date] = [_parse_float(tok, path, line) for tok in rec[1:]]
    return header, rows


def load_returns(path, riskfree_path) -> ReturnsPanel:
    """Read a wide returns CSV and a risk-free CSV and inner-join on date.

    Rows with any missing cell and dates absent from either file are dropped;
    the count is logged as a warning and kept in ``dropped_rows``.
    """
    header, ret = _read_table(path, 2)
    rf_header, rf = _read_table(riskfree_path, 2)
    if len(rf_header) != 2:
        raise DataFormatError(f"{riskfree_path}:1: risk-free file must have columns date,rate")
    tickers = header[1:]
    if len(set(tickers)) != len(tickers):
        raise DataFormatError(f"{path}:1: duplicate ticker names")
    common = sorted(set(ret) & set(rf))
    if not common:
        raise DataFormatError(f"no dates in common between {path} and {riskfree_path}")
    dates, R, r = [], [], []
    for d in common:
        row, rate = ret[d], rf[d][0]
        if math.isnan(rate) or any(math.isnan(v) for v in row):
            continue
        dates.append(d)
        R.append(row)
        r.append(rate)
    dropped = len(set(ret) | set(rf)) - len(dates)
    if dropped:
        log.warning("dropped %d row(s) with missing cells or unmatched dates", dropped)
    if not dates:
        raise DataFormatError("no complete rows remain after joining")
    return ReturnsPanel(dates, tickers, np.array(R, dtype=float), np.array(r, dtype=float), dropped)


def ljung_box(series, lag: int = DEFAULT_LAG) -> tuple[float, float]:
    """Ljung-Box ``Q = T(T+2) sum_k rho_k^2 / (T-k)`` and its chi-square(lag) p-value."""
    x = np.asarray(series, dtype=float)
    T = x.size
    if lag < 1 or lag >= T / 2:
        raise ValueError(f"lag must lie in [1, T/2), got lag={lag}, T={T}")
    d = x - x.mean()
    denom = float(d @ d)
    if not denom > 0 or not math.isfinite(denom):
        raise ValueError("Ljung-Box needs a series with positive finite variance")
    acf = np.array([d[k:] @ d[:-k] for k in range(1, lag + 1)]) / denom
    q = T * (T + 2) * float(np.sum(acf**2 / (T - np.arange(1, lag + 1))))
    return q, float(chisq_sf(q, lag))


@dataclass(frozen=True)
class ScreeningResult:
    kept: list[str]
    dropped: list[tuple[str, float, float]]  # (ticker, Q, p)
    lag: int
    level: float
    stats: dict[str, tuple[float, float]] = field(default_factory=dict)


def screen_autocorrelation(panel: ReturnsPanel, lag: int = DEFAULT_LAG, level: float = 0.05) -> ScreeningResult:
    """Keep tickers whose excess-return Ljung-Box p-value exceeds ``level``."""
    ex = panel.excess
    kept, dropped, allstats = [], [], {}
    for j, tk in enumerate(panel.tickers):
        q, pv = ljung_box(ex[:, j], lag)
        allstats[tk] = (q, pv)
        if level <= 0 or pv > level:
            kept.append(tk)
        else:
            dropped.append((tk, q, pv))
    return ScreeningResult(kept, dropped, lag, level, allstats)


def per_stock_tests(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-column t-statistics and two-sided Student-t(n-1) p-values."""
    sm = SampleMatrix(x)
    t = math.sqrt(sm.n) * sm.moments.means / np.sqrt(sm.moments.variances)
    return t, 2.0 * stats.t.sf(np.abs(t), df=sm.n - 1)


def bh_discoveries(pvals, q: float) -> np.ndarray:
    """Indices rejected by the Benjamini-Hochberg step-up rule at FDR ``q``."""
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    p = np.asarray(pvals, dtype=float)
    if p.size == 0:
        return np.array([], dtype=np.intp)
    adj = stats.false_discovery_control(p, method="bh")
    return np.flatnonzero(adj <= q)


def subsample_study(
    x: np.ndarray,
    n_list: Sequence[int],
    tests: Sequence[str],
    M: int,
    alpha: float,
    stream: RngStream,
    *,
    B: int = DEFAULT_B,
    workers: int | None = 1,
) -> list[dict]:
    """Rejection rates over ``M`` without-replacement row subsamples per ``n``.

    Subsample ``m`` at size ``n`` uses ``stream.derive(n).derive(m)``.
    """
    x = np.asarray(x, dtype=float)
    T = x.shape[0]
    if max(n_list) > T:
        raise ValueError(f"subsample size {max(n_list)} exceeds T={T}")
    battery = Battery(tests)
    rows = []
    for n in n_list:

        def one(m: int, n: int = n) -> np.ndarray:
            rep = stream.derive(n).derive(m)
            idx = np.sort(rep.derive(0).generator().choice(T, size=n, replace=False))
            sub = SampleMatrix(x[idx])
            return battery.p_values(sub, battery.bootstrap(sub, B, rep.derive(1))) <= alpha

        rej = np.zeros(len(tests), dtype=np.int64)
        for hit in ordered_map(one, M, workers):
            rej += hit
        for t, r in zip(tests, rej):
            rate = r / M
            rows.append({"n": n, "test": t, "rate": rate, "se": math.sqrt(rate * (1 - rate) / M)})
    return rows


@dataclass(frozen=True)
class SyntheticTruth:
    autocorrelated: list[str]
    signals: list[str]


def synthetic_panel(
    T: int = 501,
    p: int = 424,
    n_autocorrelated: int = 130,
    n_signals: int = 17,
    signal_t: float = 6.0,
    ar_coef: float = 0.5,
    factor_loading: float = 0.0,
    seed: int = 0,
) -> tuple[ReturnsPanel, SyntheticTruth]:
    """A look-alike weekly returns panel with known structure.

    ``n_autocorrelated`` tickers follow an AR(1) in excess returns;
    ``n_signals`` of the remaining ones get a mean excess return sized so the
    full-sample t-statistic is about ``signal_t``. An optional common factor
    adds cross-sectional correlation.
    """
    if n_autocorrelated + n_signals > p:
        raise ValueError("too many special tickers for p")
    rng = RngStream(seed).generator()
    tickers = [f"S{j:03d}" for j in range(p)]
    start = np.datetime64("2009-02-06")
    dates = [str(start + np.timedelta64(7 * i, "D")) for i in range(T)]
    vol = rng.uniform(0.02, 0.05, size=p)
    eps = rng.standard_normal((T + 50, p))
    ar = np.zeros(p, dtype=bool)
    order = rng.permutation(p)
    ar[order[:n_autocorrelated]] = True
    sig = order[n_autocorrelated:n_autocorrelated + n_signals]
    for t in range(1, T + 50):
        eps[t, ar] += ar_coef * eps[t - 1, ar]
    eps = eps[50:]
    eps[:, ar] *= math.sqrt(1 - ar_coef**2)
    if factor_loading:
        eps = (eps + factor_loading * rng.standard_normal((T, 1))) / math.sqrt(1 + factor_loading**2)
    mu = np.zeros(p)
    mu[sig] = signal_t / math.sqrt(T)
    excess = (eps + mu) * vol
    rf = 0.0004 + 0.0002 * rng.random(T)
    panel = ReturnsPanel(dates, tickers, excess + rf[:, None], rf)
    return panel, SyntheticTruth([tickers[j] for j in np.flatnonzero(ar)], [tickers[j] for j in sig])


def write_panel(panel: ReturnsPanel, returns_path, riskfree_path) -> None:
    with open(returns_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *panel.tickers])
        for d, row in zip(panel.dates, panel.returns):
            w.writerow([d, *(repr(float(v)) for v in row)])
    with open(riskfree_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "rate"])
        for d, v in zip(panel.dates, panel.riskfree):
            w.writerow([d, repr(float(v))])


TABLE2_TESTS = ("MAX", "T5", "Tp/8", "Tp/4", "Tp/2", "SUM", "TC", "COM", "adaQ")


@dataclass
class PipelineResult:
    screening: ScreeningResult
    tickers: list[str]
    t_stats: np.ndarray
    p_values: np.ndarray
    discoveries: list[str]
    reports: list
    study: list[dict]


def run_pipeline(
    panel: ReturnsPanel,
    *,
    lag: int = DEFAULT_LAG,
    screen_level: float = 0.05,
    fdr: float = 0.01,
    tests: Sequence[str] = TABLE2_TESTS,
    n_list: Sequence[int] = (100, 150, 200, 250, 300),
    M: int = 1000,
    alpha: float = 0.05,
    B: int = DEFAULT_B,
    stream: RngStream | None = None,
    outdir: str | Path | None = None,
    workers: int | None = 1,
) -> PipelineResult:
    """Screening, full-sample tests, BH discoveries and the subsample study.

    With ``outdir`` the results are written as ``screening.csv``,
    ``discoveries.csv``, ``tests.csv`` and ``study.csv``.
    """
    stream = stream if stream is not None else RngStream(0)
    scr = screen_autocorrelation(panel, lag, screen_level)
    if len(scr.kept) < 1:
        raise ValueError("screening removed every ticker")
    x = panel.select(scr.kept).excess
    t, pv = per_stock_tests(x)
    disc_idx = bh_discoveries(pv, fdr)
    battery = Battery(tests)
    full = SampleMatrix(x)
    reports = battery.reports(full, battery.bootstrap(full, B, stream.derive(0)), alpha)
    study = subsample_study(x, [n for n in n_list if n <= panel.T], tests, M, alpha,
                            stream.derive(1), B=B, workers=workers) if M > 0 else []
    res = PipelineResult(scr, scr.kept, t, pv, [scr.kept[i] for i in disc_idx], reports, study)
    if outdir is not None:
        _write_pipeline(res, Path(outdir))
    return res


def _write_pipeline(res: PipelineResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "screening.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ticker", "q_stat", "p_value", "kept"])
        kept = set(res.screening.kept)
        for tk, (q, p) in res.screening.stats.items():
            w.writerow([tk, repr(q), repr(p), "true" if tk in kept else "false"])
    disc = set(res.discoveries)
    with open(out / "discoveries.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ticker", "t_stat", "p_value", "bh_reject"])
        for tk, t, p in zip(res.tickers, res.t_stats, res.p_values):
            w.writerow([tk, repr(float(t)), repr(float(p)), "true" if tk in disc else "false"])
    with open(out / "tests.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["test", "statistic", "p_value", "alpha", "reject"])
        for r in res.reports:
            w.writerow([r.name, repr(r.statistic), repr(r.p_value), repr(r.alpha),
                        "true" if r.reject else "false"])
    with open(out / "study.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "test", "rate", "se"])
        for r in res.study:
            w.writerow([r["n"], r["test"], repr(float(r["rate"])), repr(float(r["se"]))])

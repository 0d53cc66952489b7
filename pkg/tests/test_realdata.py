import csv
import math
import textwrap

import numpy as np
import pytest

from lstat.numstat import RngStream
from lstat.realdata import (
    DataFormatError,
    ReturnsPanel,
    bh_discoveries,
    ljung_box,
    load_returns,
    per_stock_tests,
    run_pipeline,
    screen_autocorrelation,
    subsample_study,
    synthetic_panel,
    write_panel,
)


def write(path, text):
    path.write_text(textwrap.dedent(text).lstrip())
    return path


def toy_files(tmp_path, T=40, missing_rf=None, bad=None):
    rng = np.random.default_rng(0)
    dates = [f"2020-01-{i:02d}" if i < 32 else f"2020-02-{i - 31:02d}" for i in range(1, T + 1)]
    lines = ["date,AAA,BBB"]
    for i, d in enumerate(dates):
        a, b = rng.normal(0, 0.01, 2)
        tok = "oops" if bad == i else f"{a:.6f}"
        lines.append(f"{d},{tok},{b:.6f}")
    rf = ["date,rate"] + [f"{d},0.0001" for i, d in enumerate(dates) if i != missing_rf]
    r = tmp_path / "ret.csv"
    f = tmp_path / "rf.csv"
    r.write_text("\n".join(lines) + "\n")
    f.write_text("\n".join(rf) + "\n")
    return r, f


def test_load_toy(tmp_path):
    r, f = toy_files(tmp_path)
    panel = load_returns(r, f)
    assert panel.T == 40 and panel.tickers == ["AAA", "BBB"] and panel.dropped_rows == 0
    np.testing.assert_allclose(panel.excess, panel.returns - 0.0001)


def test_unmatched_riskfree_date_is_dropped(tmp_path, caplog):
    r, f = toy_files(tmp_path, missing_rf=5)
    with caplog.at_level("WARNING"):
        panel = load_returns(r, f)
    assert panel.T == 39 and panel.dropped_rows == 1
    assert "2020-01-06" not in panel.dates
    assert "dropped 1" in caplog.text


def test_missing_cell_is_dropped(tmp_path):
    r, f = toy_files(tmp_path)
    text = r.read_text().splitlines()
    text[3] = text[3].split(",")[0] + ",NA," + text[3].split(",")[2]
    r.write_text("\n".join(text) + "\n")
    assert load_returns(r, f).dropped_rows == 1


def test_parse_error_reports_line(tmp_path):
    r, f = toy_files(tmp_path, bad=4)
    with pytest.raises(DataFormatError, match=r"ret\.csv:6"):
        load_returns(r, f)


@pytest.mark.parametrize(
    "content, pattern",
    [("", ":1"), ("day,A\n2020-01-01,0.1\n", ":1"), ("date,A\n2020-01-01,0.1,0.2\n", ":2"),
     ("date,A\nd1,0.1\nd1,0.2\n", ":3")],
)
def test_malformed_returns(tmp_path, content, pattern):
    r = tmp_path / "bad.csv"
    r.write_text(content)
    _, f = toy_files(tmp_path)
    with pytest.raises(DataFormatError, match=pattern):
        load_returns(r, f)


def test_short_panel_rejected(tmp_path):
    r, f = toy_files(tmp_path, T=20)
    with pytest.raises(ValueError):
        load_returns(r, f)


@pytest.mark.parametrize("lag", [1, 5, 10])
def test_ljung_box_matches_statsmodels(lag):
    sm = pytest.importorskip("statsmodels.stats.diagnostic")
    rng = np.random.default_rng(lag)
    e = rng.standard_normal(300)
    y = e.copy()
    y[1:] += 0.3 * e[:-1]
    ref = sm.acorr_ljungbox(y, lags=[lag], return_df=True)
    q, p = ljung_box(y, lag)
    assert q == pytest.approx(float(ref["lb_stat"].iloc[0]), rel=1e-10)
    assert p == pytest.approx(float(ref["lb_pvalue"].iloc[0]), rel=1e-8, abs=1e-300)


def test_ljung_box_guards():
    with pytest.raises(ValueError):
        ljung_box(np.ones(100))
    with pytest.raises(ValueError):
        ljung_box(np.arange(10.0), lag=5)


def test_bh_example():
    np.testing.assert_array_equal(bh_discoveries([0.001, 0.008, 0.039, 0.9], 0.05), [0, 1])


def test_bh_against_step_up_definition():
    rng = np.random.default_rng(3)
    p = np.concatenate([rng.random(80), rng.random(20) * 1e-3])
    q = 0.1
    order = np.argsort(p)
    ok = np.flatnonzero(p[order] <= q * np.arange(1, 101) / 100)
    expected = np.sort(order[: ok.max() + 1]) if ok.size else []
    np.testing.assert_array_equal(bh_discoveries(p, q), expected)


def test_bh_monotone_in_q():
    p = np.random.default_rng(4).random(200) ** 3
    counts = [bh_discoveries(p, q).size for q in (0.01, 0.05, 0.1, 0.2)]
    assert counts == sorted(counts)
    with pytest.raises(ValueError):
        bh_discoveries(p, 1.0)


def test_per_stock_matches_scipy():
    from scipy import stats

    x = np.random.default_rng(5).standard_normal((50, 7)) + 0.2
    t, p = per_stock_tests(x)
    ref = stats.ttest_1samp(x, 0.0)
    np.testing.assert_allclose(t, ref.statistic, rtol=1e-12)
    np.testing.assert_allclose(p, ref.pvalue, rtol=1e-10)


def test_screening_keeps_iid_at_nominal_rate():
    panel, _ = synthetic_panel(T=500, p=400, n_autocorrelated=0, n_signals=0, seed=1)
    scr = screen_autocorrelation(panel, 10, 0.05)
    assert len(scr.kept) / 400 == pytest.approx(0.95, abs=0.03)


def test_screening_catches_ar_series():
    panel, truth = synthetic_panel(T=501, p=100, n_autocorrelated=40, n_signals=0, seed=2)
    scr = screen_autocorrelation(panel, 10, 0.05)
    assert set(truth.autocorrelated).isdisjoint(scr.kept)
    assert screen_autocorrelation(panel, 10, 0.0).kept == panel.tickers


def test_synthetic_round_trip(tmp_path):
    panel, _ = synthetic_panel(T=60, p=5, n_autocorrelated=1, n_signals=1, seed=3)
    write_panel(panel, tmp_path / "r.csv", tmp_path / "f.csv")
    back = load_returns(tmp_path / "r.csv", tmp_path / "f.csv")
    np.testing.assert_array_equal(back.returns, panel.returns)
    assert back.dates == panel.dates


def test_subsample_study_deterministic():
    panel, _ = synthetic_panel(T=200, p=40, n_autocorrelated=0, n_signals=3, seed=4)
    args = (panel.excess, [60, 120], ["T5", "SUM"], 6, 0.05, RngStream(5))
    a = subsample_study(*args, B=30)
    assert a == subsample_study(*args, B=30, workers=3)
    assert [(r["n"], r["test"]) for r in a] == [(60, "T5"), (60, "SUM"), (120, "T5"), (120, "SUM")]
    with pytest.raises(ValueError):
        subsample_study(panel.excess, [300], ["T5"], 2, 0.05, RngStream(0))


def test_pipeline_outputs(tmp_path):
    panel, truth = synthetic_panel(T=200, p=60, n_autocorrelated=10, n_signals=4, signal_t=8.0, seed=6)
    res = run_pipeline(panel, n_list=[100, 150], M=3, B=30, tests=["T5", "TC"], outdir=tmp_path,
                       stream=RngStream(6), fdr=0.05)
    surviving = set(truth.signals) & set(res.screening.kept)
    assert surviving and surviving <= set(res.discoveries)
    for name in ("screening.csv", "discoveries.csv", "tests.csv", "study.csv"):
        assert (tmp_path / name).exists()
    with open(tmp_path / "study.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["n"] for r in rows] == ["100", "100", "150", "150"]

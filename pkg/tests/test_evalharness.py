import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from optimal_timing.errors import InvalidArgumentError
from optimal_timing.evalharness import (
    BacktestConfig,
    BacktestRow,
    accuracy,
    baseline_decision,
    betainc_regularized,
    format_report,
    format_summary,
    paired_t_test,
    parse_summary,
    run_backtest,
    summarize,
    t_sf,
)
from optimal_timing.pathgen import PathSet, SeriesHistory
from optimal_timing.stopnet import StopNetConfig


def one_series(mean_path, jitter=None):
    X = np.tile(np.asarray(mean_path, dtype=float), (4, 1))
    if jitter is not None:
        X = X + np.array([[jitter], [-jitter], [jitter], [-jitter]])
    return PathSet(X[:, None, :])


class TestBaseline:
    def test_argmin_of_mean(self):
        assert baseline_decision(one_series([1.0, 0.98, 1.01], jitter=0.005)) == 2

    def test_tie_goes_early(self):
        assert baseline_decision(one_series([1.0, 1.0, 1.0])) == 1

    def test_single_path(self):
        assert baseline_decision(PathSet(np.array([[[1.2, 1.1, 0.9, 1.0]]]))) == 3

    @given(st.integers(0, 1000), st.floats(1e-3, 1e3))
    def test_scale_invariant(self, seed, c):
        X = np.random.default_rng(seed).uniform(0.5, 2.0, (10, 1, 6))
        assert baseline_decision(PathSet(X)) == baseline_decision(PathSet(X * c))


class TestAccuracy:
    def test_direct(self):
        assert accuracy([1.0, 0.9, 0.95], 3) == pytest.approx(1 - 0.05 / 0.9, rel=1e-14)

    def test_perfect(self):
        assert accuracy([1.0, 0.9, 0.95], 2) == 1.0

    def test_constant(self):
        assert all(accuracy([2.0] * 4, s) == 1.0 for s in range(1, 5))

    def test_step_range(self):
        with pytest.raises(InvalidArgumentError):
            accuracy([1.0, 2.0], 3)

    @given(st.lists(st.floats(0.01, 100), min_size=1, max_size=20), st.data())
    def test_bounded_by_one(self, x, data):
        step = data.draw(st.integers(1, len(x)))
        a = accuracy(x, step)
        assert a <= 1.0
        assert (a == 1.0) == (x[step - 1] == min(x))


class TestIncompleteBeta:
    @pytest.mark.parametrize("a", [0.5, 1.0, 2.5, 10.0, 150.0])
    @pytest.mark.parametrize("b", [0.5, 1.0, 3.0])
    @pytest.mark.parametrize("x", [1e-6, 0.01, 0.3, 0.5, 0.77, 0.999])
    def test_against_scipy(self, a, b, x):
        assert betainc_regularized(a, b, x) == pytest.approx(special.betainc(a, b, x), abs=1e-12, rel=1e-10)

    @pytest.mark.parametrize("df", [1, 2, 4, 9, 30, 300])
    @pytest.mark.parametrize("t", [-5.0, -1.3, 0.0, 0.4, 2.0, 7.0, 25.0])
    def test_t_tail_against_scipy(self, df, t):
        assert abs(t_sf(t, df) - stats.t.sf(t, df)) < 1e-10


class TestPairedT:
    def test_all_zero(self):
        r = paired_t_test([0.0, 0.0, 0.0])
        assert r.degenerate and r.p_value == 1.0

    def test_constant_positive(self):
        r = paired_t_test([1.0, 1.0, 1.0, 1.0])
        assert r.degenerate and r.p_value == 0.0 and r.t_stat == math.inf

    def test_constant_negative(self):
        r = paired_t_test([-0.5, -0.5])
        assert r.degenerate and r.p_value == 1.0

    def test_reference_values(self):
        # frozen from scipy.stats.ttest_1samp(d, 0, alternative="greater")
        r = paired_t_test([1.2, 0.8, 1.0, 1.1, 0.9])
        assert r.t_stat == pytest.approx(14.142135623730951, rel=1e-12)
        assert r.p_value == pytest.approx(7.256408530659874e-05, rel=1e-8)
        assert r.df == 4 and not r.degenerate

    def test_too_few(self):
        with pytest.raises(InvalidArgumentError):
            paired_t_test([1.0])

    @settings(max_examples=100)
    @given(st.lists(st.floats(-10, 10), min_size=2, max_size=50))
    def test_matches_scipy(self, d):
        r = paired_t_test(d)
        if r.degenerate:
            return
        ref = stats.ttest_1samp(d, 0.0, alternative="greater")
        assert r.t_stat == pytest.approx(ref.statistic, rel=1e-9, abs=1e-12)
        assert abs(r.p_value - ref.pvalue) < 1e-8

    @given(st.lists(st.floats(-10, 10), min_size=2, max_size=50))
    def test_sign_symmetry(self, d):
        r = paired_t_test(d)
        if r.degenerate:
            return
        r_neg = paired_t_test([-x for x in d])
        assert r_neg.p_value == pytest.approx(1 - r.p_value, abs=1e-12)


def synthetic_world(mu, n=320, n_series=2, sigma=0.01, seed=1):
    rng = np.random.default_rng(seed)
    dates = tuple(d.astype(dt.date) for d in np.busday_offset(np.datetime64("2010-01-04"), np.arange(n)))
    out = {}
    for s in range(n_series):
        r = mu - 0.5 * sigma**2 + sigma * rng.standard_normal(n)
        out[f"s{s}"] = SeriesHistory(f"s{s}", np.exp(np.cumsum(r)), n - 1, dates)
    return out, dates


NET = StopNetConfig(hidden_dim=8, mlp_hidden=(8,), batch_size=64, epochs=20, learning_rate=0.2)


class TestBacktest:
    def test_martingale_world_indistinguishable(self):
        hists, dates = synthetic_world(0.0)
        cfg = BacktestConfig(dates[0], dates[199], dates[200:230], 5, n_paths=256, forecaster="gbm", stopnet=NET)
        rows, summary = run_backtest(cfg, hists)
        assert summary.n_rows == 60
        assert summary.p_value > 0.1

    @pytest.mark.slow
    def test_downward_world_waits(self):
        hists, dates = synthetic_world(-0.003)
        net = StopNetConfig(hidden_dim=8, mlp_hidden=(8,), batch_size=64, epochs=80, learning_rate=0.2)
        cfg = BacktestConfig(dates[0], dates[199], dates[200:230], 5, n_paths=256, forecaster="gbm", stopnet=net)
        rows, summary = run_backtest(cfg, hists)
        assert np.mean([r.baseline_step for r in rows]) > 4.5
        assert np.mean([r.osd_step for r in rows]) > 4.5
        assert summary.osd_accuracy >= summary.baseline_accuracy - 0.005

    def test_deterministic_and_advantage_identity(self):
        hists, dates = synthetic_world(0.0, n=260)
        net = StopNetConfig(hidden_dim=4, mlp_hidden=(4,), batch_size=64, epochs=3, learning_rate=0.2)
        cfg = BacktestConfig(dates[0], dates[199], dates[200:206], 5, n_paths=128, forecaster="ar", stopnet=net, refit=False)
        rows_a, sum_a = run_backtest(cfg, hists)
        rows_b, sum_b = run_backtest(cfg, hists)
        assert format_report(rows_a, sum_a) == format_report(rows_b, sum_b)
        diffs = [r.osd_accuracy - r.baseline_accuracy for r in rows_a]
        assert sum_a.advantage == float(np.mean(diffs))

    def test_bootstrap_forecaster_runs(self):
        hists, dates = synthetic_world(0.0, n=240, n_series=1)
        net = StopNetConfig(hidden_dim=4, mlp_hidden=(4,), batch_size=32, epochs=2)
        cfg = BacktestConfig(dates[0], dates[199], dates[200:203], 5, n_paths=64, forecaster="bootstrap", stopnet=net)
        rows, summary = run_backtest(cfg, hists)
        assert len(rows) == 3
        assert all(1 <= r.osd_step <= 5 and r.baseline_accuracy <= 1 for r in rows)

    def test_skips_windows_without_future(self, caplog):
        hists, dates = synthetic_world(0.0, n=210, n_series=1)
        net = StopNetConfig(hidden_dim=4, mlp_hidden=(4,), batch_size=32, epochs=1)
        cfg = BacktestConfig(dates[0], dates[199], (dates[200], dates[207]), 5, n_paths=32, forecaster="ar", stopnet=net)
        with caplog.at_level("WARNING"):
            rows, _ = run_backtest(cfg, hists)
        assert [r.decision_date for r in rows] == [dates[200]]
        assert "fewer than 5 future observations" in caplog.text

    def test_dates_after_training(self):
        d = dt.date
        with pytest.raises(InvalidArgumentError):
            BacktestConfig(d(2008, 1, 1), d(2008, 12, 31), (d(2008, 12, 1),), 5)


def test_report_formats():
    rows = [
        BacktestRow(dt.date(2009, 2, 16), "a", 2, 3, 3, 0.99, 1.0),
        BacktestRow(dt.date(2009, 2, 16), "b", 1, 1, 4, 0.98, 0.98),
    ]
    s = summarize(rows)
    assert s.advantage == pytest.approx(0.005)
    text = format_report(rows, s)
    assert text.splitlines()[0].startswith("decision_date,series,baseline_step")
    assert "# summary" in text
    kv = parse_summary(format_summary(s))
    assert int(kv["n_rows"]) == 2
    assert float(kv["advantage"]) == s.advantage


@pytest.mark.slow
def test_protocol_on_synthetic_exchange_panel(tmp_path):
    """Fixed-fit AR(1) protocol end to end on a driftless random-walk panel."""
    from optimal_timing.pathgen import load_exchange_rate_txt

    rng = np.random.default_rng(8)
    panel = 0.8 * np.exp(np.cumsum(rng.normal(0, 0.006, (600, 8)), axis=0))
    src = tmp_path / "exchange_rate.txt"
    np.savetxt(src, panel, delimiter=",", fmt="%.17g")
    hists = dict(list(load_exchange_rate_txt(src).items())[:2])
    dates = next(iter(hists.values())).dates
    cfg = BacktestConfig(
        train_start=dates[300],
        train_end=dates[500],
        decision_dates=dates[520:530],
        horizon=5,
        n_paths=200,
        forecaster="ar",
        refit=False,
        stopnet=StopNetConfig(hidden_dim=4, mlp_hidden=(4,), batch_size=100, epochs=5, learning_rate=0.2),
    )
    rows, summary = run_backtest(cfg, hists)
    assert summary.n_rows == 20
    assert summary.baseline_accuracy > 0.97 and summary.osd_accuracy > 0.97
    assert abs(summary.advantage) < 0.01

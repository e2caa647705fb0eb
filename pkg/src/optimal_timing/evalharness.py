"""Baseline decisions, accuracy, significance tests and rolling backtests."""
from __future__ import annotations

import csv
import datetime as _dt
import io
import logging
import math
import os
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InvalidArgumentError
from .pathgen import (
    GbmParams,
    PathSet,
    SeriesHistory,
    bootstrap_paths,
    fit_ar,
    normalize_to_unit,
    sample_ar_paths,
    simulate_gbm,
)
from .stopnet import StopNetConfig, train
from .timing import decide

log = logging.getLogger(__name__)


def baseline_decision(paths: PathSet, series_index: int = 0) -> int:
    """Step (1-based) of the lowest mean forecast; ties go to the earliest step."""
    mean_path = paths.series(series_index).mean(axis=0)
    return int(np.argmin(mean_path)) + 1


def accuracy(actual_future, step: int) -> float:
    """``1 - |X(step) - min X| / min X`` for the realized future window."""
    x = np.asarray(actual_future, dtype=float)
    if not 1 <= step <= x.size:
        raise InvalidArgumentError(f"step {step} outside 1..{x.size}")
    best = x.min()
    return 1.0 - abs(x[step - 1] - best) / best


# ---------------------------------------------------------------------------
# Student t tail via the regularized incomplete beta function
# ---------------------------------------------------------------------------

_BETA_EPS = 1e-16
_BETA_TINY = 1e-300
_BETA_MAXITER = 500


def _betacf(a, b, x):
    """Continued fraction for I_x(a, b), evaluated with the modified Lentz method."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETA_TINY:
        d = _BETA_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAXITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _BETA_TINY if abs(d) < _BETA_TINY else d
        c = 1.0 + aa / c
        c = _BETA_TINY if abs(c) < _BETA_TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _BETA_TINY if abs(d) < _BETA_TINY else d
        c = 1.0 + aa / c
        c = _BETA_TINY if abs(c) < _BETA_TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)`` for ``a, b > 0`` and ``0 <= x <= 1``.

    Agrees with ``scipy.special.betainc`` to about 1e-14 on the ranges used
    for t-test tails.
    """
    if a <= 0 or b <= 0:
        raise InvalidArgumentError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise InvalidArgumentError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    # the continued fraction converges fast only on this side of the mean
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf(t: float, df: float) -> float:
    """Upper tail ``P(T > t)`` of Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    tail = 0.5 * betainc_regularized(df / 2.0, 0.5, df / (df + t * t))
    return tail if t >= 0 else 1.0 - tail


class TTestResult(NamedTuple):
    t_stat: float
    p_value: float
    df: int
    degenerate: bool


def paired_t_test(differences) -> TTestResult:
    """One-sided test of ``mean(differences) > 0``.

    With zero sample variance the statistic is infinite (or undefined when
    every difference is 0); the result is then flagged ``degenerate`` and
    ``p`` is 0 for a positive mean and 1 otherwise.
    """
    d = np.asarray(differences, dtype=float)
    n = d.size
    if n < 2:
        raise InvalidArgumentError("paired t-test needs at least 2 observations")
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0 or not math.isfinite(mean / (sd / math.sqrt(n))):
        if mean > 0:
            return TTestResult(math.inf, 0.0, n - 1, True)
        if mean < 0:
            return TTestResult(-math.inf, 1.0, n - 1, True)
        return TTestResult(0.0, 1.0, n - 1, True)
    t = mean / (sd / math.sqrt(n))
    return TTestResult(t, t_sf(t, n - 1), n - 1, False)


# ---------------------------------------------------------------------------
# Rolling backtest
# ---------------------------------------------------------------------------

FORECASTERS = ("ar", "bootstrap", "gbm")


@dataclass(frozen=True)
class BacktestConfig:
    """Protocol of one backtest run.

    ``forecaster`` is ``"ar"`` (uses ``ar_order``), ``"bootstrap"`` (uses
    ``block_len``) or ``"gbm"`` (drift and volatility estimated from log
    returns). With ``refit=False`` the forecaster is fitted once on the
    training window; otherwise on all data up to each decision date.
    """

    train_start: _dt.date
    train_end: _dt.date
    decision_dates: tuple
    horizon: int
    n_paths: int = 1000
    forecaster: str = "ar"
    ar_order: int = 1
    block_len: int = 5
    refit: bool = True
    stopnet: StopNetConfig = field(default_factory=StopNetConfig)
    seed: int = 0

    def __post_init__(self):
        dates = tuple(sorted(self.decision_dates))
        object.__setattr__(self, "decision_dates", dates)
        if self.horizon < 1:
            raise InvalidArgumentError("horizon must be >= 1")
        if self.n_paths < 1:
            raise InvalidArgumentError("n_paths must be >= 1")
        if self.train_end < self.train_start:
            raise InvalidArgumentError("train_end precedes train_start")
        if dates and dates[0] <= self.train_end:
            raise InvalidArgumentError("decision dates must fall strictly after train_end")
        if self.forecaster not in FORECASTERS:
            raise InvalidArgumentError(f"forecaster must be one of {FORECASTERS}")


@dataclass(frozen=True)
class BacktestRow:
    decision_date: _dt.date
    series: str
    baseline_step: int
    osd_step: int
    actual_step: int
    baseline_accuracy: float
    osd_accuracy: float


@dataclass(frozen=True)
class BacktestSummary:
    n_rows: int
    baseline_accuracy: float
    osd_accuracy: float
    advantage: float
    t_stat: float
    p_value: float
    degenerate: bool


def _window(history: SeriesHistory, start, end) -> SeriesHistory:
    dates = history.dates
    lo = next((k for k, d in enumerate(dates) if d >= start), len(dates))
    hi = max((k for k, d in enumerate(dates) if d <= end), default=-1)
    if hi < lo:
        raise InvalidArgumentError(f"{history.series_id}: no observations between {start} and {end}")
    return SeriesHistory(history.series_id, history.values[lo : hi + 1], history.t0 - (len(dates) - 1 - hi), dates[lo : hi + 1])


def _generate(config: BacktestConfig, fit_hist: SeriesHistory, seed_hist: SeriesHistory, seed: int) -> PathSet:
    if config.forecaster == "ar":
        model = fit_ar(fit_hist, config.ar_order)
        return sample_ar_paths(model, seed_hist, config.n_paths, config.horizon, seed)
    if config.forecaster == "bootstrap":
        returns_hist = seed_hist if config.refit else fit_hist
        p = bootstrap_paths(returns_hist, config.block_len, config.n_paths, config.horizon, seed)
        # restart from the current price when the returns come from an older window
        return p.scaled(seed_hist.last / returns_hist.last)
    r = np.diff(np.log(fit_hist.values))
    sigma = float(r.std(ddof=1)) if r.size > 1 else 0.0
    mu = float(r.mean()) + 0.5 * sigma**2
    p = simulate_gbm(GbmParams(seed_hist.last, mu, sigma), config.n_paths, config.horizon, seed)
    return PathSet(p.values, seed_hist.t0, "gbm", (seed_hist.series_id,))


def _row_seed(seed, k, i):
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, k, i]).generate_state(1)[0])


def run_backtest(config: BacktestConfig, histories: dict) -> tuple[list, BacktestSummary]:
    """Score baseline and stopping-network decisions on each (date, series) window.

    For every decision date the history up to and including that date is the
    information set, ``horizon`` further observations are the realized
    future. Paths and history are normalized by the last observed value
    before training. Windows without enough data are skipped with a warning.
    """
    rows = []
    ordered = list(histories.items())
    for sid, h in ordered:
        if h.dates is None:
            raise InvalidArgumentError(f"{sid}: backtests need dated histories")
    fixed_fit = {}
    if not config.refit:
        for sid, h in ordered:
            fixed_fit[sid] = _window(h, config.train_start, config.train_end)
    for k, date in enumerate(config.decision_dates):
        for i, (sid, h) in enumerate(ordered):
            try:
                pos = h.dates.index(date)
            except ValueError:
                log.warning("skipping %s on %s: no observation on the decision date", sid, date)
                continue
            if pos + config.horizon >= len(h):
                log.warning("skipping %s on %s: fewer than %d future observations", sid, date, config.horizon)
                continue
            seen = h.upto(pos + 1)
            fit_hist = fixed_fit.get(sid) or _window(seen, config.train_start, date)
            seed = _row_seed(config.seed, k, i)
            paths = _generate(config, fit_hist, seen, seed)
            _, norm_paths, scale = normalize_to_unit(seen, paths)
            base_step = baseline_decision(norm_paths)
            net_cfg = StopNetConfig(**{**config.stopnet.__dict__, "seed": seed})
            net_cfg = StopNetConfig(**{**net_cfg.__dict__, "batch_size": min(net_cfg.batch_size, config.n_paths)})
            params, _ = train(net_cfg, norm_paths)
            osd_step = decide([params], norm_paths).series[0].tau_star
            actual = h.values[pos + 1 : pos + 1 + config.horizon] / scale
            rows.append(
                BacktestRow(
                    date,
                    sid,
                    base_step,
                    osd_step,
                    int(np.argmin(actual)) + 1,
                    accuracy(actual, base_step),
                    accuracy(actual, osd_step),
                )
            )
    return rows, summarize(rows)


def summarize(rows: Sequence[BacktestRow]) -> BacktestSummary:
    """Pooled means over (date, series) rows and the one-sided paired t-test."""
    if not rows:
        raise InvalidArgumentError("no backtest rows to summarize")
    base = np.array([r.baseline_accuracy for r in rows])
    osd = np.array([r.osd_accuracy for r in rows])
    diff = osd - base
    if len(rows) >= 2:
        res = paired_t_test(diff)
    else:
        res = TTestResult(math.nan, math.nan, 0, True)
    return BacktestSummary(len(rows), float(base.mean()), float(osd.mean()), float(diff.mean()), res.t_stat, res.p_value, res.degenerate)


ROW_COLUMNS = (
    "decision_date", "series", "baseline_step", "osd_step", "actual_step", "baseline_accuracy", "osd_accuracy",
)


def summary_items(summary: BacktestSummary) -> list[tuple[str, str]]:
    return [
        ("n_rows", str(summary.n_rows)),
        ("baseline_accuracy", repr(summary.baseline_accuracy)),
        ("osd_accuracy", repr(summary.osd_accuracy)),
        ("advantage", repr(summary.advantage)),
        ("t_stat", repr(summary.t_stat)),
        ("p_value", repr(summary.p_value)),
        ("degenerate", str(summary.degenerate).lower()),
    ]


def format_report(rows: Sequence[BacktestRow], summary: BacktestSummary) -> str:
    """Row table, then a blank line and a ``# summary`` key,value footer."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROW_COLUMNS)
    for r in rows:
        w.writerow(
            (r.decision_date.isoformat(), r.series, r.baseline_step, r.osd_step, r.actual_step,
             repr(r.baseline_accuracy), repr(r.osd_accuracy))
        )
    buf.write("\n# summary\n")
    for key, value in summary_items(summary):
        w.writerow((key, value))
    return buf.getvalue()


def format_summary(summary: BacktestSummary) -> str:
    """``key=value`` lines for machine checks."""
    return "".join(f"{k}={v}\n" for k, v in summary_items(summary))


def parse_summary(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if line.strip():
            k, _, v = line.partition("=")
            out[k.strip()] = v.strip()
    return out


def write_text_atomic(target, text: str) -> None:
    target = os.fspath(target)
    tmp = f"{target}.tmp-{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, target)

"""Monte Carlo sample paths of future prices.

Every generator works on log-values, so prices stay strictly positive, and
draws its noise from a counter-based Philox stream keyed by
``(seed, series_index)``. Row ``j`` of a series' draw belongs to path ``j``,
so a path's values depend only on the seed, its series and its position.
"""
from __future__ import annotations

import csv
import datetime as _dt
import io
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgumentError, NumericalDegeneracyError, ParseError

PROVENANCES = ("gbm", "ar", "bootstrap", "lattice", "imported")
PATHS_HEADER = ("path_id", "series_id", "step", "value")
HISTORY_HEADER = ("date", "series_id", "value")


def series_rng(seed: int, series_index: int = 0) -> np.random.Generator:
    """Independent generator for one series, derived from the master seed."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(series_index)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SeriesHistory:
    """Observed prices of one series, oldest first, ending at index ``t0``.

    ``dates`` is optional calendar information (one per observation); the
    core logic only uses integer indices.
    """

    series_id: str
    values: np.ndarray
    t0: int = 0
    dates: tuple | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise InvalidArgumentError(f"{self.series_id}: history must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise InvalidArgumentError(f"{self.series_id}: history values must be finite and > 0")
        if self.dates is not None:
            dates = tuple(self.dates)
            if len(dates) != values.size:
                raise InvalidArgumentError(f"{self.series_id}: one date per observation required")
            if any(b <= a for a, b in zip(dates, dates[1:])):
                raise InvalidArgumentError(f"{self.series_id}: dates must be strictly increasing")
            object.__setattr__(self, "dates", dates)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_observations(cls, series_id: str, observations: Iterable[tuple[int, float]]):
        """Build from ``(time_index, value)`` pairs; indices must be consecutive."""
        obs = list(observations)
        if not obs:
            raise InvalidArgumentError(f"{series_id}: no observations")
        idx = [int(t) for t, _ in obs]
        if any(b != a + 1 for a, b in zip(idx, idx[1:])):
            raise InvalidArgumentError(f"{series_id}: time indices must be strictly increasing without gaps")
        return cls(series_id, np.array([v for _, v in obs], dtype=float), t0=idx[-1])

    def __len__(self):
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        n = self.values.size
        return np.arange(self.t0 - n + 1, self.t0 + 1)

    @property
    def last(self) -> float:
        return float(self.values[-1])

    def upto(self, n_obs: int) -> "SeriesHistory":
        """The first ``n_obs`` observations as a new history."""
        if not 1 <= n_obs <= len(self):
            raise InvalidArgumentError(f"{self.series_id}: cannot truncate to {n_obs} observations")
        shift = len(self) - n_obs
        dates = None if self.dates is None else self.dates[:n_obs]
        return SeriesHistory(self.series_id, self.values[:n_obs], self.t0 - shift, dates)


@dataclass(frozen=True)
class PathSet:
    """Sample paths indexed ``values[path, series, step]``.

    Step ``t`` (0-based column ``t - 1``) is calendar index ``t0 + t``.
    """

    values: np.ndarray
    t0: int = 0
    provenance: str = "imported"
    series_ids: tuple = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 3 or 0 in values.shape:
            raise InvalidArgumentError(f"path values must be a non-empty (J, N, T) array, got shape {values.shape}")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise InvalidArgumentError("path values must be finite and > 0")
        if self.provenance not in PROVENANCES:
            raise InvalidArgumentError(f"unknown provenance {self.provenance!r}")
        ids = self.series_ids
        if ids is None:
            ids = tuple(f"s{i}" for i in range(values.shape[1]))
        ids = tuple(str(s) for s in ids)
        if len(ids) != values.shape[1] or len(set(ids)) != len(ids):
            raise InvalidArgumentError("series_ids must be unique, one per series")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "series_ids", ids)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def n_series(self) -> int:
        return self.values.shape[1]

    @property
    def horizon(self) -> int:
        return self.values.shape[2]

    def series(self, i: int) -> np.ndarray:
        """(J, T) price matrix of series ``i``."""
        if not 0 <= i < self.n_series:
            raise InvalidArgumentError(f"series index {i} out of range for N={self.n_series}")
        return self.values[:, i, :]

    def subset(self, rows) -> "PathSet":
        return PathSet(self.values[rows], self.t0, self.provenance, self.series_ids)

    def scaled(self, factor) -> "PathSet":
        factor = np.asarray(factor, dtype=float).reshape(1, -1, 1)
        return PathSet(self.values * factor, self.t0, self.provenance, self.series_ids)

    def __eq__(self, other):
        if not isinstance(other, PathSet):
            return NotImplemented
        return (
            self.t0 == other.t0
            and self.provenance == other.provenance
            and self.series_ids == other.series_ids
            and self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def stack_paths(parts: Sequence[PathSet]) -> PathSet:
    """Join single- or multi-series PathSets along the series axis."""
    if not parts:
        raise InvalidArgumentError("nothing to stack")
    first = parts[0]
    for p in parts[1:]:
        if p.n_paths != first.n_paths or p.horizon != first.horizon or p.t0 != first.t0:
            raise InvalidArgumentError("PathSets disagree on J, T or t0")
    prov = first.provenance if all(p.provenance == first.provenance for p in parts) else "imported"
    ids = sum((p.series_ids for p in parts), ())
    return PathSet(np.concatenate([p.values for p in parts], axis=1), first.t0, prov, ids)


# ---------------------------------------------------------------------------
# Geometric Brownian motion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GbmParams:
    s0: float
    mu: float
    sigma: float

    def __post_init__(self):
        if not (np.isfinite(self.s0) and self.s0 > 0):
            raise InvalidArgumentError("s0 must be > 0")
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise InvalidArgumentError("sigma must be >= 0")
        if not np.isfinite(self.mu):
            raise InvalidArgumentError("mu must be finite")


def _check_counts(n_paths, horizon):
    if int(n_paths) < 1:
        raise InvalidArgumentError(f"n_paths must be >= 1, got {n_paths}")
    if int(horizon) < 1:
        raise InvalidArgumentError(f"horizon must be >= 1, got {horizon}")


def simulate_gbm(params, n_paths: int, horizon: int, seed: int = 0, t0: int = 0) -> PathSet:
    """Exact per-step GBM: ``S[t+1] = S[t] * exp(mu - sigma**2/2 + sigma*Z)``.

    ``params`` is a single :class:`GbmParams` or one per series.
    """
    plist = [params] if isinstance(params, GbmParams) else list(params)
    if not plist:
        raise InvalidArgumentError("at least one GbmParams required")
    _check_counts(n_paths, horizon)
    out = np.empty((n_paths, len(plist), horizon))
    for i, p in enumerate(plist):
        z = series_rng(seed, i).standard_normal((n_paths, horizon))
        log_inc = (p.mu - 0.5 * p.sigma**2) + p.sigma * z
        out[:, i, :] = p.s0 * np.exp(np.cumsum(log_inc, axis=1))
    return PathSet(out, t0, "gbm")


# ---------------------------------------------------------------------------
# Gaussian AR on log-values
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ArModel:
    """``log X[t] = intercept + sum_k coefficients[k] * log X[t-1-k] + noise``."""

    order: int
    coefficients: tuple
    intercept: float
    noise_sigma: float
    fitted_on: str = ""

    def __post_init__(self):
        coefs = tuple(float(c) for c in self.coefficients)
        if self.order < 1 or len(coefs) != self.order:
            raise InvalidArgumentError("coefficients length must equal order >= 1")
        if not self.noise_sigma >= 0:
            raise InvalidArgumentError("noise_sigma must be >= 0")
        object.__setattr__(self, "coefficients", coefs)


def fit_ar(history: SeriesHistory, order: int = 1) -> ArModel:
    """Ordinary least squares AR(order) fit on log-values.

    ``noise_sigma`` is the root-mean-square residual.
    """
    if order < 1:
        raise InvalidArgumentError("order must be >= 1")
    if len(history) < order + 2:
        raise InvalidArgumentError(
            f"{history.series_id}: need at least {order + 2} observations for AR({order}), got {len(history)}"
        )
    y = np.log(history.values)
    n = y.size
    design = np.column_stack([np.ones(n - order)] + [y[order - 1 - k : n - 1 - k] for k in range(order)])
    target = y[order:]
    # relative tolerance on singular values catches exactly-collinear columns
    sv = np.linalg.svd(design, compute_uv=False)
    if sv[-1] <= sv[0] * 1e-10:
        raise NumericalDegeneracyError(f"{history.series_id}: singular AR design matrix (constant or collinear history)")
    beta, *_ = np.linalg.lstsq(design, target, rcond=None)
    resid = target - design @ beta
    return ArModel(
        order=order,
        coefficients=tuple(beta[1:]),
        intercept=float(beta[0]),
        noise_sigma=float(np.sqrt(np.mean(resid**2))),
        fitted_on=history.series_id,
    )


def sample_ar_paths(
    model: ArModel,
    history: SeriesHistory,
    n_paths: int,
    horizon: int,
    seed: int = 0,
    series_index: int = 0,
) -> PathSet:
    """Roll the AR recursion forward from the end of ``history``."""
    _check_counts(n_paths, horizon)
    p = model.order
    if len(history) < p:
        raise InvalidArgumentError(f"{history.series_id}: need {p} observations to seed AR({p})")
    coefs = np.asarray(model.coefficients)
    eps = model.noise_sigma * series_rng(seed, series_index).standard_normal((n_paths, horizon))
    # lags[:, k] holds log X[t-1-k]
    lags = np.tile(np.log(history.values[::-1][:p]), (n_paths, 1))
    logs = np.empty((n_paths, horizon))
    for t in range(horizon):
        nxt = model.intercept + lags @ coefs + eps[:, t]
        logs[:, t] = nxt
        lags = np.column_stack([nxt, lags[:, :-1]])
    return PathSet(np.exp(logs)[:, None, :], history.t0, "ar", (history.series_id,))


# ---------------------------------------------------------------------------
# Circular block bootstrap
# ---------------------------------------------------------------------------


def bootstrap_paths(
    history: SeriesHistory,
    block_len: int,
    n_paths: int,
    horizon: int,
    seed: int = 0,
    series_index: int = 0,
) -> PathSet:
    """Resample historical log-returns in circular blocks of ``block_len``."""
    _check_counts(n_paths, horizon)
    if block_len < 1:
        raise InvalidArgumentError("block_len must be >= 1")
    returns = np.diff(np.log(history.values))
    n_ret = returns.size
    if block_len > n_ret:
        raise InvalidArgumentError(
            f"{history.series_id}: block_len={block_len} exceeds the {n_ret} available returns"
        )
    n_blocks = -(-horizon // block_len)
    starts = series_rng(seed, series_index).integers(0, n_ret, size=(n_paths, n_blocks))
    idx = (starts[:, :, None] + np.arange(block_len)) % n_ret
    sampled = returns[idx.reshape(n_paths, -1)[:, :horizon]]
    values = history.last * np.exp(np.cumsum(sampled, axis=1))
    return PathSet(values[:, None, :], history.t0, "bootstrap", (history.series_id,))


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------


def normalize_to_unit(history, paths: PathSet):
    """Divide history and paths by the last observed value of each series.

    ``history`` is one :class:`SeriesHistory` (then ``scale`` is a float) or a
    sequence with one history per series of ``paths`` (then ``scale`` is an
    array). Multiply by ``scale`` to invert.
    """
    single = isinstance(history, SeriesHistory)
    hists = [history] if single else list(history)
    if len(hists) != paths.n_series:
        raise InvalidArgumentError(f"{len(hists)} histories for {paths.n_series} series")
    scales = np.array([h.last for h in hists])
    new_hists = [SeriesHistory(h.series_id, h.values / s, h.t0, h.dates) for h, s in zip(hists, scales)]
    new_paths = PathSet(paths.values / scales.reshape(1, -1, 1), paths.t0, paths.provenance, paths.series_ids)
    if single:
        return new_hists[0], new_paths, float(scales[0])
    return new_hists, new_paths, scales


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def _atomic_write_text(path, text: str):
    path = os.fspath(path)
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def format_paths(paths: PathSet) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PATHS_HEADER)
    for j in range(paths.n_paths):
        for i, sid in enumerate(paths.series_ids):
            for t in range(paths.horizon):
                w.writerow((j, sid, t + 1, repr(float(paths.values[j, i, t]))))
    return buf.getvalue()


def save_paths(paths: PathSet, target) -> None:
    """Write the paths CSV (``path_id,series_id,step,value``); ``repr`` floats round-trip exactly."""
    _atomic_write_text(target, format_paths(paths))


def load_paths(source, t0: int = 0) -> PathSet:
    """Read a paths CSV into a PathSet with ``provenance='imported'``.

    Path ids are sorted numerically, series keep first-appearance order, and
    the horizon is the largest step seen. Every (path, series, step) cell must
    be present exactly once.
    """
    name = os.fspath(source) if not hasattr(source, "read") else getattr(source, "name", "<stream>")
    fh = open(source, encoding="utf-8", newline="") if not hasattr(source, "read") else source
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != PATHS_HEADER:
            raise ParseError(f"expected header {','.join(PATHS_HEADER)}", 1, name)
        cells = {}
        series_order = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", lineno, name)
            try:
                j = int(row[0])
                t = int(row[2])
                v = float(row[3])
            except ValueError as exc:
                raise ParseError(f"malformed row: {exc}", lineno, name) from None
            sid = row[1].strip()
            if not sid:
                raise ParseError("empty series_id", lineno, name)
            if t < 1:
                raise ParseError(f"step must be >= 1, got {t}", lineno, name)
            if not np.isfinite(v):
                raise ParseError(f"non-finite price {row[3]!r}", lineno, name)
            if v <= 0:
                raise ParseError(f"non-positive price {row[3]!r}", lineno, name)
            series_order.setdefault(sid, len(series_order))
            key = (j, sid, t)
            if key in cells:
                raise ParseError(f"duplicate cell path_id={j}, series_id={sid}, step={t}", lineno, name)
            cells[key] = v
    finally:
        if fh is not source:
            fh.close()
    if not cells:
        raise ParseError("no data rows", None, name)
    path_ids = sorted({k[0] for k in cells})
    horizon = max(k[2] for k in cells)
    sids = sorted(series_order, key=series_order.get)
    values = np.empty((len(path_ids), len(sids), horizon))
    for jj, j in enumerate(path_ids):
        for ii, sid in enumerate(sids):
            for t in range(1, horizon + 1):
                try:
                    values[jj, ii, t - 1] = cells[(j, sid, t)]
                except KeyError:
                    raise ParseError(
                        f"missing cell path_id={j}, series_id={sid} (i={ii}), step={t}", None, name
                    ) from None
    return PathSet(values, t0, "imported", tuple(sids))


def format_history(histories: Sequence[SeriesHistory]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HISTORY_HEADER)
    for h in histories:
        if h.dates is None:
            raise InvalidArgumentError(f"{h.series_id}: history has no dates")
        for d, v in zip(h.dates, h.values):
            w.writerow((d.isoformat(), h.series_id, repr(float(v))))
    return buf.getvalue()


def save_history(histories: Sequence[SeriesHistory], target) -> None:
    _atomic_write_text(target, format_history(histories))


def load_history(source) -> dict[str, SeriesHistory]:
    """Read a history CSV (``date,series_id,value``) into one history per series.

    Rows may be in any order; within a series dates must be unique. ``t0`` is
    the 0-based position of the last observation.
    """
    name = os.fspath(source)
    rows: dict[str, list] = {}
    with open(source, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != HISTORY_HEADER:
            raise ParseError(f"expected header {','.join(HISTORY_HEADER)}", 1, name)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", lineno, name)
            try:
                d = _dt.date.fromisoformat(row[0].strip()[:10])
                v = float(row[2])
            except ValueError as exc:
                raise ParseError(f"malformed row: {exc}", lineno, name) from None
            if not np.isfinite(v) or v <= 0:
                raise ParseError(f"non-positive price {row[2]!r}", lineno, name)
            rows.setdefault(row[1].strip(), []).append((d, v, lineno))
    out = {}
    for sid, obs in rows.items():
        obs.sort(key=lambda r: r[0])
        for a, b in zip(obs, obs[1:]):
            if a[0] == b[0]:
                raise ParseError(f"duplicate date {b[0]} for series {sid}", b[2], name)
        out[sid] = SeriesHistory(sid, np.array([v for _, v, _ in obs]), len(obs) - 1, tuple(d for d, _, _ in obs))
    return out


EXCHANGE_RATE_COLUMNS = (
    "australia", "british", "canada", "switzerland", "china", "japan", "new_zealand", "singapore",
)


def load_exchange_rate_txt(source, start=_dt.date(1990, 1, 1)) -> dict[str, SeriesHistory]:
    """Read the headerless 8-column ``exchange_rate.txt`` panel.

    Rows are daily observations; dates are assigned as consecutive business
    days from ``start`` (the calendar convention of the common public copy).
    """
    try:
        data = np.loadtxt(source, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise ParseError(f"malformed panel: {exc}", None, os.fspath(source)) from None
    if data.shape[1] != len(EXCHANGE_RATE_COLUMNS):
        raise ParseError(f"expected {len(EXCHANGE_RATE_COLUMNS)} columns, got {data.shape[1]}", None, os.fspath(source))
    first = np.busday_offset(np.datetime64(start, "D"), 0, roll="forward")
    dates = tuple(
        d.astype(_dt.date) for d in np.busday_offset(first, np.arange(data.shape[0]), roll="forward")
    )
    return {
        sid: SeriesHistory(sid, data[:, k], data.shape[0] - 1, dates)
        for k, sid in enumerate(EXCHANGE_RATE_COLUMNS)
    }

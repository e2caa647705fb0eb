"""Hard stopping times, the mode decision, and decision costs."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError
from .pathgen import PathSet
from .stopnet import NetworkParams, StopWeights, stop_weights


@dataclass(frozen=True)
class CostSpec:
    """Units ``a_i`` bought of each series; total cost is ``sum_i a_i * X_i(tau_i)``."""

    weights: tuple

    def __post_init__(self):
        w = tuple(float(a) for a in self.weights)
        if not w or not all(np.isfinite(a) and a > 0 for a in w):
            raise InvalidArgumentError("cost weights must be a non-empty sequence of positive reals")
        object.__setattr__(self, "weights", w)

    @classmethod
    def unit(cls, n_series: int) -> "CostSpec":
        return cls((1.0,) * n_series)


def hard_stop(d) -> int:
    """First step ``t`` (1-based) with ``sum_{s<=t} d[s] >= 1 - d[t]``.

    The condition holds at ``t = T`` in exact arithmetic; ``T`` is returned if
    rounding makes it fail there.
    """
    return int(hard_stops(np.asarray(d, dtype=float)[None, :])[0])


def hard_stops(d: np.ndarray) -> np.ndarray:
    """Row-wise :func:`hard_stop` for a (J, T) weight matrix."""
    d = np.asarray(d, dtype=float)
    if d.ndim != 2 or d.shape[1] < 1:
        raise InvalidArgumentError("weights must be a (J, T) array with T >= 1")
    hit = np.cumsum(d, axis=1) >= 1.0 - d
    hit[:, -1] = True
    return np.argmax(hit, axis=1) + 1


def aggregate_mode(stops) -> tuple[int, dict]:
    """Most frequent stop and the ``{step: count}`` histogram; ties go to the earliest step."""
    stops = np.asarray(stops, dtype=int)
    if stops.ndim != 1 or stops.size == 0:
        raise InvalidArgumentError("need at least one stop")
    if stops.min() < 1:
        raise InvalidArgumentError("stops are 1-based steps")
    counts = np.bincount(stops)
    tau = int(np.argmax(counts))  # argmax returns the first maximum
    hist = {int(t): int(c) for t, c in enumerate(counts) if c > 0}
    return tau, hist


def _as_d(w):
    return w.d if isinstance(w, StopWeights) else np.asarray(w, dtype=float)


def expected_cost(weights: Sequence, paths: PathSet, cost: CostSpec | None = None) -> float:
    """``sum_i a_i * mean_j sum_t D[i][j, t] * X[j, i, t]``.

    ``weights`` has one (J, T) weight matrix (or :class:`StopWeights`) per series.
    """
    cost = cost or CostSpec.unit(paths.n_series)
    if len(weights) != paths.n_series or len(cost.weights) != paths.n_series:
        raise InvalidArgumentError(
            f"{len(weights)} weight sets and {len(cost.weights)} cost weights for {paths.n_series} series"
        )
    total = 0.0
    for i, (w, a) in enumerate(zip(weights, cost.weights)):
        d = _as_d(w)
        X = paths.series(i)
        if d.shape != X.shape:
            raise InvalidArgumentError(f"series {i}: weights shape {d.shape} != paths shape {X.shape}")
        total += a * float(np.mean(np.sum(d * X, axis=1)))
    return total


@dataclass(frozen=True)
class SeriesDecision:
    series_id: str
    stops: np.ndarray = field(repr=False)
    histogram: dict
    tau_star: int
    expected_cost: float
    weight: float = 1.0

    def counts(self, horizon: int) -> np.ndarray:
        """Counts for steps ``1..horizon`` including empty ones."""
        return np.array([self.histogram.get(t, 0) for t in range(1, horizon + 1)])


@dataclass(frozen=True)
class DecisionReport:
    """Per-series decisions. ``tau_star`` values are offsets 1..T from ``t0``."""

    series: tuple
    t0: int
    horizon: int
    expected_cost: float
    method: str = "osd"
    seed: int | None = None

    @property
    def tau_star(self) -> tuple:
        return tuple(s.tau_star for s in self.series)

    def __eq__(self, other):
        if not isinstance(other, DecisionReport):
            return NotImplemented
        return (
            (self.t0, self.horizon, self.expected_cost, self.method, self.seed)
            == (other.t0, other.horizon, other.expected_cost, other.method, other.seed)
            and len(self.series) == len(other.series)
            and all(
                a.series_id == b.series_id
                and a.tau_star == b.tau_star
                and a.histogram == b.histogram
                and a.expected_cost == b.expected_cost
                and np.array_equal(a.stops, b.stops)
                for a, b in zip(self.series, other.series)
            )
        )

    __hash__ = None


def decide(models: Sequence[NetworkParams], paths: PathSet, cost: CostSpec | None = None, seed=None) -> DecisionReport:
    """Forward pass, soft weights, per-path hard stops and the mode for each series."""
    cost = cost or CostSpec.unit(paths.n_series)
    if len(models) != paths.n_series:
        raise InvalidArgumentError(f"{len(models)} models for {paths.n_series} series")
    if len(cost.weights) != paths.n_series:
        raise InvalidArgumentError("one cost weight per series required")
    decisions = []
    all_w = []
    for i, (model, a) in enumerate(zip(models, cost.weights)):
        sw = stop_weights(model, paths.series(i))
        all_w.append(sw)
        stops = hard_stops(sw.d)
        tau, hist = aggregate_mode(stops)
        per_series = float(np.mean(np.sum(sw.d * paths.series(i), axis=1)))
        decisions.append(SeriesDecision(paths.series_ids[i], stops, hist, tau, a * per_series, a))
    total = expected_cost(all_w, paths, cost)
    if seed is None and models:
        seed = models[0].config.seed
    return DecisionReport(tuple(decisions), paths.t0, paths.horizon, total, "osd", seed)

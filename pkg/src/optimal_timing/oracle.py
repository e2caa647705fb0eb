"""Exact solutions on a recombining binomial lattice.

Two independent routes to the minimal expected purchase cost when stopping
is allowed at steps 1..T: backward induction over lattice nodes, and brute
force over every adapted stop/continue rule on the full (non-recombining)
binary tree of paths.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, OracleLimitError
from .pathgen import PathSet, series_rng

EXHAUSTIVE_MAX_T = 4


@dataclass(frozen=True)
class LatticeModel:
    s0: float
    u: float
    dn: float
    p: float
    horizon: int

    def __post_init__(self):
        if not self.s0 > 0:
            raise InvalidArgumentError("s0 must be > 0")
        if not 0 < self.dn < self.u:
            raise InvalidArgumentError("need 0 < dn < u")
        if not 0 <= self.p <= 1:
            raise InvalidArgumentError("p must lie in [0, 1]")
        if self.horizon < 1:
            raise InvalidArgumentError("horizon must be >= 1")

    def price(self, t: int, k) -> np.ndarray:
        """Price at step ``t`` after ``k`` up moves."""
        k = np.asarray(k)
        return self.s0 * self.u**k * self.dn ** (t - k)


@dataclass(frozen=True)
class OraclePolicy:
    """``stop[t-1][k]`` / ``value[t-1][k]`` for step ``t`` and ``k`` up moves."""

    stop: tuple
    value: tuple

    def always_wait(self) -> bool:
        return not any(s.any() for s in self.stop[:-1])


def lattice_value(model: LatticeModel) -> tuple[float, OraclePolicy]:
    """Backward induction ``V = min(price, p*V_up + (1-p)*V_down)``; no stop at step 0.

    Nodes where exercising is no worse than continuing are marked as stops.
    """
    T, p = model.horizon, model.p
    V = model.price(T, np.arange(T + 1)).astype(float)
    values = [V]
    stops = [np.ones(T + 1, dtype=bool)]
    for t in range(T - 1, 0, -1):
        cont = p * V[1:] + (1 - p) * V[:-1]
        price = model.price(t, np.arange(t + 1))
        stop = price <= cont
        V = np.where(stop, price, cont)
        values.append(V)
        stops.append(stop)
    root = p * V[1] + (1 - p) * V[0]
    return float(root), OraclePolicy(tuple(reversed(stops)), tuple(reversed(values)))


def _all_paths(T):
    """Every up(1)/down(0) sequence of length T, in lexicographic order."""
    return np.array(list(itertools.product((0, 1), repeat=T)), dtype=int).reshape(-1, T)


def adapted_rule_costs(model: LatticeModel) -> np.ndarray:
    """Expected cost of every stop/continue assignment on the path tree.

    A rule assigns one bit to each path prefix of length ``1..T-1`` (1 = stop
    there); the stop is the first prefix whose bit is set, else ``T``.
    """
    T = model.horizon
    if T > EXHAUSTIVE_MAX_T:
        raise OracleLimitError(
            f"exhaustive enumeration supports T <= {EXHAUSTIVE_MAX_T}, got T={T}"
        )
    paths = _all_paths(T)
    ups = np.cumsum(paths, axis=1)
    prices = model.s0 * model.u**ups * model.dn ** (np.arange(1, T + 1) - ups)
    n_up = paths.sum(axis=1)
    prob = model.p**n_up * (1 - model.p) ** (T - n_up)

    # prefix of length t (1 <= t < T) -> bit slot
    slot = {}
    for t in range(1, T):
        for pre in itertools.product((0, 1), repeat=t):
            slot[pre] = len(slot)
    n_bits = len(slot)
    # slot_of[path, t-1] for t = 1..T-1
    slot_of = np.array([[slot[tuple(row[:t])] for t in range(1, T)] for row in paths], dtype=int).reshape(len(paths), T - 1)

    rules = ((np.arange(2**n_bits)[:, None] >> np.arange(n_bits)) & 1).astype(bool)
    costs = np.zeros(rules.shape[0])
    for w, path_prices, slots in zip(prob, prices, slot_of):
        bits = rules[:, slots]  # (R, T-1)
        bits = np.concatenate([bits, np.ones((rules.shape[0], 1), dtype=bool)], axis=1)
        stop_idx = np.argmax(bits, axis=1)
        costs += w * path_prices[stop_idx]
    return costs


def exhaustive_adapted_value(model: LatticeModel) -> float:
    """Minimum expected cost over all adapted rules, by enumeration (T <= 4)."""
    return float(adapted_rule_costs(model).min())


def sample_lattice_paths(model: LatticeModel, n_paths: int, seed: int = 0) -> PathSet:
    """I.i.d. lattice trajectories for steps 1..T as a one-series PathSet."""
    if n_paths < 1:
        raise InvalidArgumentError("n_paths must be >= 1")
    ups = series_rng(seed, 0).random((n_paths, model.horizon)) < model.p
    k = np.cumsum(ups, axis=1)
    t = np.arange(1, model.horizon + 1)
    values = model.s0 * model.u**k * model.dn ** (t - k)
    return PathSet(values[:, None, :], 0, "lattice", ("lattice",))

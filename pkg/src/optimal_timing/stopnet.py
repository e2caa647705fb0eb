"""Recurrent soft-stopping network.

A gated recurrent cell reads one series' path step by step; a Tanh MLP head
with a Sigmoid output turns each hidden state into a stopping probability
``h[t]``. The soft stopping weights are

    D[t] = h[t] * (1 - D[1] - ... - D[t-1])     for t < T
    D[T] = 1 - D[1] - ... - D[T-1]

so every row of ``D`` is a distribution over steps. The training objective
is the path average of ``sum_t D[t] * X[t]``. Forward and backward passes are
written out by hand in numpy and vectorized over paths.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidArgumentError, NumericalError, ParseError, TrainingDivergedError
from .pathgen import PathSet

H_CLAMP = 1e-7
MODEL_MAGIC = "optimal-timing-model"
MODEL_VERSION = 1

_GATES = ("z", "r", "n")


@dataclass(frozen=True)
class StopNetConfig:
    hidden_dim: int = 16
    mlp_hidden: tuple = (16,)
    input_features: int = 2
    learning_rate: float = 0.05
    batch_size: int = 256
    epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mlp_hidden", tuple(int(w) for w in self.mlp_hidden))
        if self.hidden_dim < 1 or any(w < 1 for w in self.mlp_hidden):
            raise InvalidArgumentError("all layer widths must be >= 1")
        if self.input_features not in (1, 2):
            raise InvalidArgumentError("input_features must be 1 (price) or 2 (price, t/T)")
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise InvalidArgumentError("learning_rate must be > 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise InvalidArgumentError("batch_size and epochs must be >= 1")


def param_shapes(config: StopNetConfig) -> dict[str, tuple]:
    """Ordered name -> shape map of every trainable array."""
    H, F = config.hidden_dim, config.input_features
    shapes = {}
    for g in _GATES:
        shapes[f"W_i{g}"] = (H, F)
        shapes[f"W_h{g}"] = (H, H)
        shapes[f"b_i{g}"] = (H,)
        shapes[f"b_h{g}"] = (H,)
    widths = (H,) + config.mlp_hidden + (1,)
    for k in range(len(widths) - 1):
        shapes[f"head_W{k}"] = (widths[k + 1], widths[k])
        shapes[f"head_b{k}"] = (widths[k + 1],)
    return shapes


@dataclass(frozen=True, eq=False)
class NetworkParams:
    """Weights of one per-series network. Treat the arrays as read-only."""

    config: StopNetConfig
    weights: dict = field(repr=False)

    def __post_init__(self):
        shapes = param_shapes(self.config)
        if list(self.weights) != list(shapes):
            raise InvalidArgumentError("weight names do not match the configuration")
        for name, shape in shapes.items():
            arr = self.weights[name]
            if arr.shape != shape:
                raise InvalidArgumentError(f"{name}: shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise InvalidArgumentError(f"{name}: non-finite entries")

    @property
    def n_head_layers(self) -> int:
        return len(self.config.mlp_hidden) + 1

    def replace(self, weights: dict) -> "NetworkParams":
        return NetworkParams(self.config, {k: weights[k] for k in self.weights})

    def flat(self) -> np.ndarray:
        return np.concatenate([w.ravel() for w in self.weights.values()])

    def equals(self, other: "NetworkParams") -> bool:
        return self.config == other.config and all(
            np.array_equal(self.weights[k], other.weights[k]) for k in self.weights
        )


def init_network(config: StopNetConfig) -> NetworkParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) matrices and zero biases."""
    rng = np.random.default_rng(np.random.SeedSequence([int(config.seed) & 0xFFFFFFFFFFFFFFFF, 0x1A17]))
    weights = {}
    for name, shape in param_shapes(config).items():
        if len(shape) == 2:
            bound = 1.0 / math.sqrt(shape[1])
            weights[name] = rng.uniform(-bound, bound, size=shape)
        else:
            weights[name] = np.zeros(shape)
    return NetworkParams(config, weights)


def zero_network(config: StopNetConfig) -> NetworkParams:
    return NetworkParams(config, {k: np.zeros(s) for k, s in param_shapes(config).items()})


def step_features(prices, input_features: int = 2) -> np.ndarray:
    """Per-step network inputs for a (J, T) or (T,) price array.

    Feature 0 is the price; feature 1 (if requested) is ``t / T``.
    """
    prices = np.asarray(prices)
    if not np.issubdtype(prices.dtype, np.floating):
        prices = prices.astype(float)
    if prices.ndim == 1:
        prices = prices[None, :]
    J, T = prices.shape
    if input_features == 1:
        return prices[:, :, None]
    frac = np.broadcast_to(np.arange(1, T + 1, dtype=prices.dtype) / T, (J, T))
    return np.stack([prices, frac], axis=-1)


def _sigmoid(x):
    # split form avoids overflow in exp for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _forward(params: NetworkParams, x: np.ndarray):
    """Run the network on features ``x`` of shape (J, T, F); keep caches for backprop."""
    w = params.weights
    J, T, F = x.shape
    if F != params.config.input_features:
        raise InvalidArgumentError(f"expected {params.config.input_features} features per step, got {F}")
    if not np.all(np.isfinite(x)):
        raise NumericalError("non-finite network input")
    L = params.n_head_layers
    h = np.zeros((J, params.config.hidden_dim), dtype=x.dtype)
    cache = []
    raw = np.empty((J, T), dtype=x.dtype)
    for t in range(T):
        xt = x[:, t, :]
        z = _sigmoid(xt @ w["W_iz"].T + w["b_iz"] + h @ w["W_hz"].T + w["b_hz"])
        r = _sigmoid(xt @ w["W_ir"].T + w["b_ir"] + h @ w["W_hr"].T + w["b_hr"])
        hn = h @ w["W_hn"].T + w["b_hn"]
        n = np.tanh(xt @ w["W_in"].T + w["b_in"] + r * hn)
        h_new = (1.0 - z) * n + z * h
        acts = [h_new]
        a = h_new
        for k in range(L - 1):
            a = np.tanh(a @ w[f"head_W{k}"].T + w[f"head_b{k}"])
            acts.append(a)
        out = _sigmoid(a @ w[f"head_W{L - 1}"].T + w[f"head_b{L - 1}"])[:, 0]
        raw[:, t] = out
        cache.append((xt, h, z, r, hn, n, acts, out))
        h = h_new
    if not np.all(np.isfinite(raw)):
        raise NumericalError("non-finite head output")
    return raw, cache


def forward_h(params: NetworkParams, path) -> np.ndarray:
    """Head outputs ``h[t]`` in (0, 1) for one path or a batch of paths.

    ``path`` holds step features of shape (T, F) or (J, T, F). ``h[t]`` depends
    only on steps ``1..t``. Outputs are clamped to ``[1e-7, 1 - 1e-7]``.
    """
    x = np.asarray(path)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(float)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3:
        raise InvalidArgumentError("path must have shape (T, F) or (J, T, F)")
    raw, _ = _forward(params, x)
    h = np.clip(raw, H_CLAMP, 1.0 - H_CLAMP)
    return h[0] if single else h


def soft_weights(h) -> np.ndarray:
    """Soft stopping weights from head outputs (1-d sequence or (J, T) batch).

    For ``t < T`` the max against ``t + 1 - T <= 0`` is inactive, so ``D[t]``
    takes fraction ``h[t]`` of the remaining mass; the last step takes the rest.
    """
    h = np.asarray(h)
    if not np.issubdtype(h.dtype, np.floating):
        h = h.astype(float)
    single = h.ndim == 1
    if single:
        h = h[None]
    if h.ndim != 2 or h.shape[1] < 1:
        raise InvalidArgumentError("h must be a non-empty sequence or a (J, T) array")
    if not np.all((h > 0) & (h < 1)):
        raise InvalidArgumentError("every h[t] must lie strictly inside (0, 1)")
    T = h.shape[1]
    d = np.empty_like(h)
    remaining = np.ones(h.shape[0], dtype=h.dtype)
    for t in range(T - 1):
        # t is 0-based, the 1-based step is t + 1 and the max's floor is (t + 2 - T)
        assert t + 2 - T <= 0
        d[:, t] = h[:, t] * remaining
        remaining = remaining - d[:, t]
    d[:, T - 1] = remaining
    return d[0] if single else d


@dataclass(frozen=True)
class StopWeights:
    """Soft weights ``d`` and clamped head outputs ``h`` of one series, both (J, T)."""

    d: np.ndarray
    h: np.ndarray


def stop_weights(params: NetworkParams, prices) -> StopWeights:
    """Soft weights of every path in a (J, T) price matrix."""
    h = forward_h(params, step_features(prices, params.config.input_features))
    return StopWeights(soft_weights(h), h)


def _continuation(h, X):
    """Expected cost from each step on, ``C[t] = C[t+1] + h[t] * (X[t] - C[t+1])``.

    Returns (C, R) where ``R[t]`` is the mass still unassigned at step ``t``.
    ``C[:, 0]`` equals ``sum_t D[t] * X[t]`` per path.
    """
    J, T = X.shape
    C = np.empty((J, T + 1), dtype=X.dtype)
    C[:, T] = 0.0
    C[:, T - 1] = X[:, T - 1]
    for t in range(T - 2, -1, -1):
        C[:, t] = C[:, t + 1] + h[:, t] * (X[:, t] - C[:, t + 1])
    R = np.ones((J, T), dtype=X.dtype)
    for t in range(1, T):
        R[:, t] = R[:, t - 1] * (1.0 - h[:, t - 1])
    return C, R


def loss_grad_h(h, X):
    """Loss and its gradient with respect to the head outputs ``h``, both (J, T).

    ``d loss / d h[t] = R[t] * (X[t] - C[t+1]) / J`` for ``t < T``. At ``t = T``
    the max in the weight recursion is pinned at 1, so that slot is exactly 0.
    """
    J, T = X.shape
    C, R = _continuation(h, X)
    g_h = np.zeros((J, T), dtype=X.dtype)
    g_h[:, : T - 1] = R[:, : T - 1] * (X[:, : T - 1] - C[:, 1:T]) / J
    return float(np.mean(C[:, 0])), g_h


def _series_prices(paths, series_index):
    if isinstance(paths, PathSet):
        return paths.series(series_index)
    X = np.asarray(paths)
    if not np.issubdtype(X.dtype, np.floating):
        X = X.astype(float)
    if X.ndim != 2:
        raise InvalidArgumentError("expected a PathSet or a (J, T) price matrix")
    return X


def loss(params: NetworkParams, paths, series_index: int = 0) -> float:
    """Path average of ``sum_t D[t] * X[t]`` for one series."""
    return float(loss_exact(params, paths, series_index))


def loss_exact(params: NetworkParams, paths, series_index: int = 0):
    """:func:`loss` without the cast to ``float``.

    With ``np.longdouble`` weights and prices the whole forward pass runs in
    extended precision, which finite-difference checks rely on.
    """
    X = _series_prices(paths, series_index)
    h = forward_h(params, step_features(X, params.config.input_features))
    C, _ = _continuation(h, X)
    return np.mean(C[:, 0])


def _loss_and_grad(params: NetworkParams, X: np.ndarray):
    w = params.weights
    J, T = X.shape
    L = params.n_head_layers
    raw, cache = _forward(params, step_features(X, params.config.input_features))
    h = np.clip(raw, H_CLAMP, 1.0 - H_CLAMP)
    value, g_h = loss_grad_h(h, X)
    g_h = g_h * ((raw > H_CLAMP) & (raw < 1.0 - H_CLAMP))

    grads = {k: np.zeros_like(v) for k, v in w.items()}
    g_hidden = np.zeros((J, params.config.hidden_dim))
    for t in range(T - 1, -1, -1):
        xt, h_prev, z, r, hn, n, acts, out = cache[t]
        # head
        g_a = (g_h[:, t] * out * (1.0 - out))[:, None]
        grads[f"head_W{L - 1}"] += g_a.T @ acts[L - 1]
        grads[f"head_b{L - 1}"] += g_a.sum(axis=0)
        g_act = g_a @ w[f"head_W{L - 1}"]
        for k in range(L - 2, -1, -1):
            g_pre = g_act * (1.0 - acts[k + 1] ** 2)
            grads[f"head_W{k}"] += g_pre.T @ acts[k]
            grads[f"head_b{k}"] += g_pre.sum(axis=0)
            g_act = g_pre @ w[f"head_W{k}"]
        g_hn_total = g_hidden + g_act
        # gated cell
        g_n = g_hn_total * (1.0 - z)
        g_z = g_hn_total * (h_prev - n)
        g_prev = g_hn_total * z
        g_an = g_n * (1.0 - n**2)
        g_r = g_an * hn
        g_hn = g_an * r
        g_az = g_z * z * (1.0 - z)
        g_ar = g_r * r * (1.0 - r)
        for gate, g_in, g_hid in (("z", g_az, g_az), ("r", g_ar, g_ar), ("n", g_an, g_hn)):
            grads[f"W_i{gate}"] += g_in.T @ xt
            grads[f"b_i{gate}"] += g_in.sum(axis=0)
            grads[f"W_h{gate}"] += g_hid.T @ h_prev
            grads[f"b_h{gate}"] += g_hid.sum(axis=0)
            g_prev = g_prev + g_hid @ w[f"W_h{gate}"]
        if not np.all(np.isfinite(g_prev)):
            raise NumericalError(f"non-finite gradient at step {t + 1}")
        g_hidden = g_prev
    return value, grads


def gradient(params: NetworkParams, batch, series_index: int = 0) -> dict:
    """Exact gradient of :func:`loss` with respect to every weight array."""
    X = _series_prices(batch, series_index)
    if X.shape[0] < 1:
        raise InvalidArgumentError("empty batch")
    return _loss_and_grad(params, X)[1]


def train(config: StopNetConfig, paths, series_index: int = 0, params: NetworkParams | None = None):
    """Plain mini-batch SGD on one series.

    Runs ``epochs * ceil(J / batch_size)`` steps over shuffled batches.
    Returns the final parameters and the full-data loss trace, whose first
    entry is the loss before training and then one entry per epoch.
    """
    X = _series_prices(paths, series_index)
    J = X.shape[0]
    if J < config.batch_size:
        raise InvalidArgumentError(f"batch_size={config.batch_size} exceeds the {J} available paths")
    if params is None:
        params = init_network(config)
    rng = np.random.default_rng(np.random.SeedSequence([int(config.seed) & 0xFFFFFFFFFFFFFFFF, 0x5EED]))
    weights = {k: v.copy() for k, v in params.weights.items()}
    current = params.replace(weights)
    trace = [loss(current, X)]
    lr = config.learning_rate
    for epoch in range(config.epochs):
        order = rng.permutation(J)
        for start in range(0, J, config.batch_size):
            rows = order[start : start + config.batch_size]
            try:
                _, g = _loss_and_grad(current, X[rows])
            except NumericalError as exc:
                raise TrainingDivergedError(f"epoch {epoch + 1}: {exc}", trace) from exc
            for k in weights:
                weights[k] -= lr * g[k]
        if not all(np.all(np.isfinite(v)) for v in weights.values()):
            raise TrainingDivergedError(f"epoch {epoch + 1}: weights became non-finite", trace)
        value = loss(current, X)
        trace.append(value)
        if not math.isfinite(value):
            raise TrainingDivergedError(f"epoch {epoch + 1}: loss is not finite", trace)
    return NetworkParams(config, {k: v.copy() for k, v in weights.items()}), trace


# ---------------------------------------------------------------------------
# Model file
# ---------------------------------------------------------------------------


def format_models(models, series_ids) -> str:
    """Text dump of one network per series; floats are written in hex."""
    series_ids = list(series_ids)
    if len(series_ids) != len(models):
        raise InvalidArgumentError("one series id per model required")
    lines = [f"{MODEL_MAGIC} v{MODEL_VERSION}", f"series {len(models)}"]
    for sid, m in zip(series_ids, models):
        cfg = asdict(m.config)
        cfg["mlp_hidden"] = list(cfg["mlp_hidden"])
        lines.append(f"series_id {sid}")
        lines.append("config " + json.dumps(cfg, sort_keys=True))
        for name, arr in m.weights.items():
            rows, cols = (arr.shape[0], arr.shape[1]) if arr.ndim == 2 else (1, arr.shape[0])
            lines.append(f"tensor {name} {arr.ndim} {rows} {cols}")
            for row in arr.reshape(rows, cols):
                lines.append(" ".join(float(v).hex() for v in row))
        lines.append("end")
    return "\n".join(lines) + "\n"


def save_models(models, series_ids, target) -> None:
    target = os.fspath(target)
    tmp = f"{target}.tmp-{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_models(models, series_ids))
    os.replace(tmp, target)


def load_models(source):
    """Inverse of :func:`save_models`; returns ``(series_ids, models)``."""
    name = os.fspath(source)
    with open(source, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(lines):
            raise ParseError("unexpected end of file", pos, name)
        pos += 1
        return lines[pos - 1]

    if take() != f"{MODEL_MAGIC} v{MODEL_VERSION}":
        raise ParseError("not a model file or unsupported version", 1, name)
    try:
        n_series = int(take().split()[1])
    except (IndexError, ValueError):
        raise ParseError("bad series count", pos, name) from None
    ids, models = [], []
    for _ in range(n_series):
        head = take()
        if not head.startswith("series_id "):
            raise ParseError("expected series_id", pos, name)
        ids.append(head[len("series_id "):])
        cfg_line = take()
        if not cfg_line.startswith("config "):
            raise ParseError("expected config", pos, name)
        try:
            cfg = StopNetConfig(**json.loads(cfg_line[len("config "):]))
        except (TypeError, ValueError) as exc:
            raise ParseError(f"bad config: {exc}", pos, name) from None
        weights = {}
        for wname, shape in param_shapes(cfg).items():
            parts = take().split()
            if len(parts) != 5 or parts[0] != "tensor" or parts[1] != wname:
                raise ParseError(f"expected tensor {wname}", pos, name)
            ndim, rows, cols = int(parts[2]), int(parts[3]), int(parts[4])
            data = []
            for _ in range(rows):
                row = take().split()
                if len(row) != cols:
                    raise ParseError(f"{wname}: expected {cols} values", pos, name)
                try:
                    data.append([float.fromhex(v) for v in row])
                except ValueError:
                    raise ParseError(f"{wname}: bad float", pos, name) from None
            arr = np.array(data, dtype=float).reshape(shape if ndim == len(shape) else (-1,))
            if arr.shape != shape:
                raise ParseError(f"{wname}: shape mismatch", pos, name)
            weights[wname] = arr
        if take() != "end":
            raise ParseError("expected end", pos, name)
        models.append(NetworkParams(cfg, weights))
    return ids, models

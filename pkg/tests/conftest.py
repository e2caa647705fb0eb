import numpy as np
import pytest

from optimal_timing.stopnet import loss_exact


def fd_gradient(params, X, step=1e-5):
    """Central finite differences of the loss, evaluated in extended precision.

    The forward pass runs in ``np.longdouble`` so round-off stays far below
    the analytic gradient's smallest entries.
    """
    XL = np.asarray(X, dtype=np.longdouble)
    base = {k: v.astype(np.longdouble) for k, v in params.weights.items()}
    h = np.longdouble(step)
    out = {}
    for name, arr in base.items():
        g = np.zeros(arr.shape)
        for idx in np.ndindex(arr.shape):
            plus = dict(base)
            plus[name] = arr.copy()
            plus[name][idx] += h
            minus = dict(base)
            minus[name] = arr.copy()
            minus[name][idx] -= h
            diff = loss_exact(params.replace(plus), XL) - loss_exact(params.replace(minus), XL)
            g[idx] = float(diff / (2 * h))
        out[name] = g
    return out


def max_relative_error(analytic, numeric):
    worst = 0.0
    for name in analytic:
        a, f = analytic[name], numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-300)
        worst = max(worst, float(np.max(np.abs(a - f) / denom)))
    return worst


def random_tiny_instance(seed, max_hidden=4, max_T=6, max_J=16):
    """Random small network (with non-zero biases) and positive price paths."""
    from optimal_timing.stopnet import StopNetConfig, init_network

    rng = np.random.default_rng(seed)
    cfg = StopNetConfig(
        hidden_dim=int(rng.integers(1, max_hidden + 1)),
        mlp_hidden=(int(rng.integers(1, 5)),),
        input_features=int(rng.integers(1, 3)),
        seed=seed,
    )
    params = init_network(cfg)
    params = params.replace({k: v + 0.3 * rng.standard_normal(v.shape) for k, v in params.weights.items()})
    T = int(rng.integers(2, max_T + 1))
    J = int(rng.integers(1, max_J + 1))
    X = np.exp(0.1 * rng.standard_normal((J, T)).cumsum(axis=1))
    return params, X


@pytest.fixture
def tiny_instance():
    return random_tiny_instance


_CRITERIA = []


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(name, passed, detail)``."""

    def record(name, passed, detail=""):
        _CRITERIA.append((name, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _CRITERIA:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")

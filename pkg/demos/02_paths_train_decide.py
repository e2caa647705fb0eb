"""From a price history to a purchase date for each series.

Run with ``python3 demos/02_paths_train_decide.py``.
"""
# %%
import numpy as np

from optimal_timing import CostSpec, decide
from optimal_timing.pathgen import (
    GbmParams,
    SeriesHistory,
    bootstrap_paths,
    fit_ar,
    normalize_to_unit,
    sample_ar_paths,
    simulate_gbm,
    stack_paths,
)
from optimal_timing.stopnet import StopNetConfig, train

rng = np.random.default_rng(5)

# %%
# Two made-up histories: one trending down, one flat with noise.
falling = SeriesHistory("falling", 1.5 * np.exp(np.cumsum(rng.normal(-0.004, 0.01, 400))))
flat = SeriesHistory("flat", 0.7 * np.exp(np.cumsum(rng.normal(0.0, 0.01, 400))))
horizon = 10

# %%
# Three ways to imagine the next ten observations.
ar = fit_ar(falling, order=1)
print("AR(1) on log prices:", ar.coefficients, "intercept", ar.intercept, "sigma", ar.noise_sigma)
ar_paths = sample_ar_paths(ar, falling, n_paths=500, horizon=horizon, seed=1)
boot_paths = bootstrap_paths(flat, block_len=5, n_paths=500, horizon=horizon, seed=1, series_index=1)
gbm_paths = simulate_gbm(GbmParams(1.0, -0.002, 0.01), n_paths=500, horizon=horizon, seed=1)
print("shapes:", ar_paths.values.shape, boot_paths.values.shape, gbm_paths.values.shape)

# %%
# Put the two history-driven forecasts side by side and rescale so every
# series starts at 1. Training is much better behaved on unit-scale inputs.
paths = stack_paths([ar_paths, boot_paths])
_, paths, scales = normalize_to_unit([falling, flat], paths)
print("scales:", scales)

# %%
# One network per series, then the decision: the most common stopping step.
config = StopNetConfig(hidden_dim=8, mlp_hidden=(8,), batch_size=100, epochs=40, learning_rate=0.2)
models = [train(config, paths, i)[0] for i in range(paths.n_series)]
report = decide(models, paths, CostSpec((2.0, 1.0)))
for s in report.series:
    bars = " ".join(f"{t}:{c}" for t, c in enumerate(s.counts(horizon), start=1))
    print(f"{s.series_id:8s} buy at step {s.tau_star:2d}  cost/unit {s.expected_cost / s.weight:.4f}  [{bars}]")
print(f"total expected cost (2 units + 1 unit): {report.expected_cost:.4f}")

"""When does waiting pay? A binomial lattice answered three ways.

Run with ``python3 demos/01_lattice_oracle.py``.
"""
# %%
# A price that moves up by 10% with probability 0.4 and down by 10% otherwise
# drifts downward, so a buyer who must purchase within four steps should wait.
from optimal_timing import LatticeModel, decide, exhaustive_adapted_value, lattice_value
from optimal_timing.oracle import sample_lattice_paths
from optimal_timing.stopnet import StopNetConfig, train

model = LatticeModel(s0=1.0, u=1.1, dn=0.9, p=0.4, horizon=4)
value, policy = lattice_value(model)
print(f"backward induction: {value:.8f}  (always wait: {policy.always_wait()})")

# %%
# Brute force over every stop/continue rule on the 16-path tree gives the
# same number. With T=4 there are 2**14 candidate rules.
print(f"exhaustive search:  {exhaustive_adapted_value(model):.8f}")

# %%
# Now learn the rule from simulated trajectories alone. The network never
# sees p; it only sees sampled prices.
paths = sample_lattice_paths(model, 10_000, seed=0)
params, trace = train(StopNetConfig(epochs=30), paths)
report = decide([params], paths)
print(f"learned rule:       {report.expected_cost:.8f}  (loss {trace[0]:.4f} -> {trace[-1]:.4f})")
print("stop histogram:", report.series[0].histogram, " mode:", report.tau_star[0])

# %%
# In a fair game (p = 0.5) no rule beats buying at any fixed step.
fair = LatticeModel(1.0, 1.1, 0.9, 0.5, 4)
print(f"fair lattice value: {lattice_value(fair)[0]:.8f}")

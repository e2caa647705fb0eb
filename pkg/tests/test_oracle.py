import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from optimal_timing.errors import OracleLimitError
from optimal_timing.oracle import (
    LatticeModel,
    adapted_rule_costs,
    exhaustive_adapted_value,
    lattice_value,
    sample_lattice_paths,
)


class TestLatticeValue:
    def test_martingale(self):
        v, _ = lattice_value(LatticeModel(1.0, 1.1, 0.9, 0.5, 2))
        assert v == pytest.approx(1.0, abs=1e-12)

    def test_downward_drift_waits(self):
        v, policy = lattice_value(LatticeModel(1.0, 1.1, 0.9, 0.4, 2))
        assert v == pytest.approx(0.9604, abs=1e-12)
        assert policy.always_wait()
        np.testing.assert_allclose(policy.value[0], [0.882, 1.078], rtol=1e-12)

    def test_single_step(self):
        m = LatticeModel(2.0, 1.2, 0.7, 0.3, 1)
        v, _ = lattice_value(m)
        assert v == pytest.approx(0.3 * 1.2 * 2 + 0.7 * 0.7 * 2, rel=1e-15)

    def test_upward_drift_stops_at_first_step(self):
        v, policy = lattice_value(LatticeModel(1.0, 1.1, 0.9, 0.7, 3))
        assert v == pytest.approx(0.7 * 1.1 + 0.3 * 0.9, rel=1e-14)
        assert policy.stop[0].all()

    def test_policy_invariants(self):
        m = LatticeModel(1.0, 1.15, 0.85, 0.45, 4)
        _, policy = lattice_value(m)
        assert policy.stop[-1].all()
        for t in range(1, m.horizon):
            price = m.price(t, np.arange(t + 1))
            cont = m.p * policy.value[t][1:] + (1 - m.p) * policy.value[t][:-1]
            np.testing.assert_array_equal(policy.value[t - 1], np.minimum(price, cont))


class TestExhaustive:
    def test_hand_cases(self):
        assert exhaustive_adapted_value(LatticeModel(1.0, 1.1, 0.9, 0.4, 2)) == pytest.approx(0.9604, abs=1e-12)
        assert exhaustive_adapted_value(LatticeModel(1.0, 1.1, 0.9, 0.5, 2)) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("T", [2, 3, 4])
    def test_martingale_rules_all_equal(self, T):
        costs = adapted_rule_costs(LatticeModel(1.0, 1.1, 0.9, 0.5, T))
        np.testing.assert_allclose(costs, 1.0, atol=1e-12)

    def test_refuses_long_horizon(self):
        with pytest.raises(OracleLimitError, match="T <= 4"):
            exhaustive_adapted_value(LatticeModel(1.0, 1.1, 0.9, 0.5, 5))

    def test_rule_count(self):
        # one bit per path prefix of length 1..T-1
        assert adapted_rule_costs(LatticeModel(1.0, 1.1, 0.9, 0.5, 3)).size == 2 ** (2 + 4)

    @settings(max_examples=60, deadline=None)
    @given(
        st.floats(1.01, 1.5),
        st.floats(0.5, 0.99),
        st.floats(0.01, 0.99),
        st.integers(1, 4),
        st.floats(0.1, 10.0),
    )
    def test_agreement(self, u, dn, p, T, s0):
        m = LatticeModel(s0, u, dn, p, T)
        assert abs(lattice_value(m)[0] - exhaustive_adapted_value(m)) <= 1e-12 * max(1.0, s0)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(1.01, 1.5), st.floats(0.5, 0.99), st.floats(0.01, 0.99), st.integers(1, 6))
    def test_dominance(self, u, dn, p, T):
        m = LatticeModel(1.0, u, dn, p, T)
        v, _ = lattice_value(m)
        stop_first = p * u + (1 - p) * dn
        stop_last = stop_first**T
        assert v <= stop_first + 1e-12
        assert v <= stop_last + 1e-12


class TestSampling:
    def test_p_one(self):
        ps = sample_lattice_paths(LatticeModel(1.0, 1.1, 0.9, 1.0, 3), 5, seed=0)
        np.testing.assert_allclose(ps.values[:, 0, :], np.tile(1.1 ** np.arange(1, 4), (5, 1)))

    def test_up_frequency(self):
        m = LatticeModel(1.0, 1.1, 0.9, 0.4, 5)
        X = sample_lattice_paths(m, 10_000, seed=1).values[:, 0, :]
        prev = np.concatenate([np.ones((X.shape[0], 1)), X[:, :-1]], axis=1)
        ups = X / prev > 1
        freq = ups.mean()
        se = np.sqrt(0.4 * 0.6 / ups.size)
        assert abs(freq - 0.4) < 3 * se

    def test_seeded(self):
        m = LatticeModel(1.0, 1.1, 0.9, 0.4, 4)
        assert sample_lattice_paths(m, 100, 3) == sample_lattice_paths(m, 100, 3)

    def test_sample_mean_matches_rule_value(self):
        # always-wait cost on samples vs the exact (p u + (1-p) dn)^T
        m = LatticeModel(1.0, 1.1, 0.9, 0.4, 4)
        X = sample_lattice_paths(m, 20_000, seed=2).values[:, 0, -1]
        se = X.std(ddof=1) / np.sqrt(X.size)
        assert abs(X.mean() - 0.98**4) < 3 * se

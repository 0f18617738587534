"""Occupancy polytope: membership, policy equivalence, and the transport."""
import numpy as np
import pytest

from pabid import (
    induced_marginals,
    make_even_grid,
    policy_sample,
    q_membership,
    recover_policy,
)
from pabid.mirror_descent import Policy

from conftest import random_policy, random_q_member


class TestMembership:
    def test_uniform_rows_are_members(self):
        q = np.full((3, 4), 0.25)
        assert q_membership(q) == []

    def test_dominance_violation_detected(self):
        # slot 1 mass at the low bid, slot 2 at the high bid: CDF crossing
        q = np.array([[1.0, 0.0], [0.0, 1.0]])
        violations = q_membership(q)
        assert any(v.kind == "dominance" and v.layer == 0 and v.index == 0
                   for v in violations)

    def test_row_sum_and_negative_detected(self):
        q = np.array([[0.5, 0.4], [1.2, -0.2]])
        kinds = {v.kind for v in q_membership(q)}
        assert "row_sum" in kinds and "negative" in kinds

    def test_policy_marginals_are_members(self, rng):
        for _ in range(1000):
            demand = int(rng.integers(1, 5))
            grid_size = int(rng.integers(2, 7))
            q = random_q_member(rng, demand, grid_size)
            assert q_membership(q, tol=1e-8) == [], (demand, grid_size)


class TestPolicyRoundTrip:
    def test_point_mass_chain_is_identity_transport(self):
        q = np.zeros((2, 4))
        q[:, 2] = 1.0
        policy = recover_policy(q)
        assert policy.transitions[0, 2, 2] == pytest.approx(1.0)
        back = induced_marginals(policy).probs
        assert np.allclose(back, q, atol=1e-12)

    def test_round_trip_on_random_members(self, rng):
        for _ in range(1000):
            demand = int(rng.integers(1, 5))
            grid_size = int(rng.integers(2, 9))
            q = random_q_member(rng, demand, grid_size)
            back = induced_marginals(recover_policy(q)).probs
            assert np.max(np.abs(back - q)) <= 1e-8

    def test_transport_support_respects_monotonicity(self, rng):
        for _ in range(50):
            q = random_q_member(rng, 3, 6)
            policy = recover_policy(q)
            for m in range(2):
                for b in range(6):
                    assert np.all(policy.transitions[m, b, b + 1:] == 0.0)
                    assert policy.transitions[m, b].sum() == pytest.approx(1.0)

    def test_dominance_violation_rejected(self):
        q = np.array([[1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(ValueError):
            recover_policy(q)


class TestInducedMarginals:
    def test_uniform_policy_matches_monte_carlo(self, rng):
        grid = make_even_grid(4)
        policy = random_policy(rng, 3, 4)
        exact = induced_marginals(policy).probs
        draws = 200_000
        counts = np.zeros((3, 4))
        for _ in range(draws):
            bid = policy_sample(policy, rng, grid)
            for m, j in enumerate(bid.indices):
                counts[m, j] += 1
        freq = counts / draws
        sigma = np.sqrt(np.maximum(exact * (1 - exact), 1e-12) / draws)
        assert np.all(np.abs(freq - exact) <= 3 * sigma + 5e-4)

    def test_deterministic_chain(self):
        initial = np.array([0.0, 0.0, 1.0])
        transitions = np.zeros((1, 3, 3))
        transitions[0, 2, 1] = 1.0
        transitions[0, 1, 1] = 1.0
        transitions[0, 0, 0] = 1.0
        policy = Policy(initial=initial, transitions=transitions)
        q = induced_marginals(policy).probs
        assert q[0].tolist() == [0.0, 0.0, 1.0]
        assert q[1].tolist() == [0.0, 1.0, 0.0]

    def test_sampled_vectors_are_monotone(self, rng):
        grid = make_even_grid(5)
        policy = random_policy(rng, 4, 5)
        for _ in range(200):
            bid = policy_sample(policy, rng, grid)
            assert np.all(np.diff(bid.indices) <= 0)

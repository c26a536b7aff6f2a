"""
Unit tests for distorted value iteration and the softmax policy.
"""

from __future__ import annotations

import numpy as np
import pytest

from probe_core import diffcore as dc
from probe_core.gamespace import GameParams, build_topology, realize_mdp
from probe_core.planner import (
    inference_policies,
    inference_policy,
    plan,
    softmax_policy,
    value_iteration,
)
from probe_core.players import LOSS_NEUTRAL, PlayerTrait, TraitBatch, distort


def two_state_game(gamma: float = 0.5):
    topology = build_topology("path", 1, 2)
    params = GameParams.from_arrays(np.array([0.0, 1.0]), trainable=False)
    return realize_mdp(topology, params, learn_transition=False, gamma=gamma)


def dense_fixed_point(mdp, trait: PlayerTrait, tol: float = 1e-10) -> np.ndarray:
    """Independent Bellman iteration on plain arrays."""
    perceived = np.array([distort(float(r), trait) for r in mdp.R])
    T = mdp.T
    V = np.zeros(len(perceived))
    while True:
        Q = np.einsum("sat,t->sa", T, perceived + mdp.gamma * V)
        updated = Q.max(axis=1)
        if np.max(np.abs(updated - V)) < tol:
            return updated
        V = updated


class TestValueIteration:
    """Test value iteration."""

    def test_two_state_fixed_point(self):
        """R = [0, 1], gamma = 0.5, identity trait converges to V = [2, 2]."""
        values = value_iteration(two_state_game(), LOSS_NEUTRAL, iterations=100)
        assert values.array == pytest.approx([2.0, 2.0], abs=1e-6)

    def test_zero_rewards_give_zero_values(self, path_game):
        topology = path_game.topology
        params = GameParams.from_arrays(np.zeros(topology.n_states), trainable=False)
        mdp = realize_mdp(topology, params, False)
        values = value_iteration(mdp, PlayerTrait(1.3, 0.6), iterations=20)
        assert values.array.tolist() == [0.0] * topology.n_states

    def test_runs_exact_iteration_count(self, path_game):
        values = value_iteration(path_game, LOSS_NEUTRAL, iterations=7)
        assert values.iterations == 7
        assert len(values.residuals) == 7

    def test_contraction(self, grid_game):
        """Successive changes shrink by at least gamma."""
        residuals = value_iteration(grid_game, PlayerTrait(1.2, 0.7), iterations=40).residuals
        for earlier, later in zip(residuals[1:], residuals[2:]):
            assert later <= grid_game.gamma * earlier + 1e-12

    def test_tolerance_stops_early(self):
        values = value_iteration(two_state_game(), LOSS_NEUTRAL, iterations=500, tolerance=1e-9)
        assert values.iterations < 500
        assert values.residuals[-1] < 1e-9

    def test_rejects_zero_iterations(self, path_game):
        with pytest.raises(ValueError):
            value_iteration(path_game, LOSS_NEUTRAL, iterations=0)

    @pytest.mark.parametrize("seed", range(50))
    def test_matches_dense_solver(self, seed):
        """200 sweeps agree with an independently coded fixed point on games of <= 4 states."""
        rng = np.random.default_rng(seed)
        if seed % 5 == 4:
            topology = build_topology("grid", 2, 2)
        else:
            topology = build_topology("path", 1, int(rng.integers(1, 5)))
        n = topology.n_states
        sticky = bool(rng.integers(2))
        params = GameParams.from_arrays(
            rng.uniform(-3, 3, size=n), rng.normal(size=n) if sticky else None, trainable=False
        )
        gamma = float(rng.uniform(0.5, 0.9))
        mdp = realize_mdp(topology, params, learn_transition=sticky, gamma=gamma)
        trait = PlayerTrait(*rng.uniform(0.5, 1.5, size=2))
        values = value_iteration(mdp, trait, iterations=200)
        np.testing.assert_allclose(values.array, dense_fixed_point(mdp, trait), atol=1e-6)

    def test_grid_matches_dense_solver(self):
        topology = build_topology("grid", 2, 2)
        params = GameParams.from_arrays(np.array([0.5, -1.0, 2.0, -0.2]), trainable=False)
        mdp = realize_mdp(topology, params, learn_transition=False, gamma=0.9)
        trait = PlayerTrait(0.7, 1.2)
        values = value_iteration(mdp, trait, iterations=200)
        np.testing.assert_allclose(values.array, dense_fixed_point(mdp, trait), atol=1e-6)

    def test_value_gradient(self, numeric_gradient):
        """Gradient of mean(V) w.r.t. rewards agrees with finite differences."""
        topology = build_topology("path", 1, 3)
        params = GameParams.from_arrays(np.array([0.8, 1.3, 2.1]), np.array([0.2, -0.4, 0.0]))
        mdp = realize_mdp(topology, params, learn_transition=True, gamma=0.9)
        values = value_iteration(mdp, PlayerTrait(1.2, 0.8), iterations=30)
        expr = dc.reduce_mean(values.values)
        leaves = [params.reward, params.stick_logit]
        analytic = dc.gradient(expr, leaves)
        for leaf in leaves:
            np.testing.assert_allclose(
                analytic[leaf], numeric_gradient(expr, leaf), rtol=1e-3, atol=1e-7
            )


class TestSoftmaxPolicy:
    """Test the softmax policy."""

    def test_two_state_policy(self):
        """Q(s1) = [1, 2] gives pi(s1) = [0.26894, 0.73106]."""
        mdp = two_state_game()
        values = value_iteration(mdp, LOSS_NEUTRAL, iterations=100)
        policy = softmax_policy(mdp, LOSS_NEUTRAL, values)
        assert policy.q.value[0] == pytest.approx([1.0, 2.0], abs=1e-6)
        assert policy.array[0] == pytest.approx([0.26894, 0.73106], abs=1e-5)

    def test_equal_q_gives_uniform_row(self):
        """At the right end stay and moveRight coincide."""
        mdp = two_state_game()
        policy = softmax_policy(mdp, LOSS_NEUTRAL, value_iteration(mdp, LOSS_NEUTRAL, 50))
        assert policy.array[1].tolist() == [0.5, 0.5]

    def test_shift_invariance(self):
        probs = dc.softmax(dc.constant([[0.3, 1.7]])).value
        shifted = dc.softmax(dc.constant([[10.3, 11.7]])).value
        np.testing.assert_allclose(probs, shifted, atol=1e-12)

    def test_rows_sum_to_one(self, grid_game):
        _, policy = plan(grid_game, PlayerTrait(0.7, 1.2), iterations=50)
        np.testing.assert_allclose(policy.array.sum(axis=-1), 1.0, atol=1e-9)

    def test_baseline_path_prefers_right_near_goal(self, path_game):
        """The identity player moves right at state 5, next to the +5 reward."""
        policy = inference_policy(path_game, LOSS_NEUTRAL).array
        assert policy[5 - 1, 1] > policy[5 - 1, 0]

    def test_batch_matches_single(self, grid_game):
        traits = [PlayerTrait(1.0, 1.0), PlayerTrait(1.2, 0.7), PlayerTrait(0.7, 1.2)]
        batched = inference_policy(grid_game, TraitBatch.from_traits(traits)).array
        for i, trait in enumerate(traits):
            single = inference_policy(grid_game, trait).array
            np.testing.assert_allclose(batched[i], single, atol=1e-6)

    def test_chunking_does_not_change_policies(self, path_game, rng):
        traits = TraitBatch.from_exponents(rng.uniform(0.5, 1.5, size=(5, 2)))
        whole = inference_policies(path_game, traits)
        chunked = inference_policies(path_game, traits, chunk=2)
        assert whole.shape == (5, 6, 2)
        np.testing.assert_allclose(whole, chunked, atol=1e-6)

    def test_no_traits(self, path_game):
        empty = TraitBatch.from_exponents(np.zeros((0, 2)))
        assert inference_policies(path_game, empty).shape == (0, 6, 2)

"""
Unit tests for the game designer.

Tests the optimizer, the MI objective, design runs on tiny games and the exact
information check on games small enough to enumerate.
"""

from __future__ import annotations

import math
from dataclasses import replace
from unittest import mock

import numpy as np
import pytest

from probe_core import diffcore as dc
from probe_core.designer import (
    Adam,
    AdamState,
    DesignConfig,
    DivergenceError,
    UnsupportedPriorError,
    adaptive_gradient_step,
    design_game,
    discrete_variational_estimate,
    entropy_of_prior,
    exact_information,
    mi_loss,
    refit_posterior,
    sampled_variational_estimate,
    smoothed_loss,
)
from probe_core.gamespace import (
    GameParams,
    TopologyError,
    baseline_game,
    build_topology,
    realize_mdp,
)
from probe_core.interaction import (
    GumbelNoise,
    InteractionConfig,
    TrajectoryBatch,
    sample_trajectory_soft,
)
from probe_core.players import DiagonalUniform, FullUniform, GaussianMixture, TraitBatch
from probe_core.posterior import CATEGORICAL, PosteriorNet


def sticky_path(cols: int = 3):
    topology = build_topology("path", 1, cols)
    params = GameParams.from_arrays(np.linspace(0.8, 2.1, cols), np.linspace(0.4, -0.6, cols))
    return params, realize_mdp(topology, params, learn_transition=True, gamma=0.9)


def deterministic_path(cols: int = 3):
    topology = build_topology("path", 1, cols)
    params = GameParams.from_arrays(np.linspace(0.8, 2.1, cols), trainable=False)
    return realize_mdp(topology, params, learn_transition=False, gamma=0.9)


def trait_grid(k: int = 5) -> TraitBatch:
    axis = np.linspace(0.6, 1.4, k)
    return TraitBatch.from_exponents(np.array([[p, n] for p in axis for n in axis]))


class TestEntropy:
    """Test the closed-form prior entropy."""

    def test_unit_box(self):
        assert entropy_of_prior(FullUniform()) == pytest.approx(0.0)

    def test_diagonal(self):
        assert entropy_of_prior(DiagonalUniform()) == pytest.approx(-0.69315, abs=1e-5)

    def test_larger_box(self):
        assert entropy_of_prior(FullUniform(0.5, 1.5, 0.0, 2.0)) == pytest.approx(math.log(2.0))

    def test_mixture_has_no_closed_form(self):
        with pytest.raises(UnsupportedPriorError):
            entropy_of_prior(GaussianMixture())


class TestAdam:
    """Test the adaptive-moment update."""

    def test_first_step_moves_by_learning_rate(self):
        """Bias correction makes the first step lr * sign(g)."""
        params = {"w": np.array([1.0, -2.0])}
        grads = {"w": np.array([0.5, -3.0])}
        updated, state = adaptive_gradient_step(params, grads, AdamState(), lr=0.01)
        assert updated["w"] == pytest.approx([0.99, -1.99], abs=1e-8)
        assert state.t == 1

    def test_constant_gradient_keeps_step_size(self):
        params = {"w": np.zeros(1)}
        state = AdamState()
        for _ in range(10):
            params, state = adaptive_gradient_step(params, {"w": np.ones(1)}, state, lr=0.1)
        assert params["w"] == pytest.approx([-1.0], abs=1e-6)

    def test_zero_gradient_leaves_params(self):
        params = {"w": np.array([0.3, 0.7])}
        updated, _ = adaptive_gradient_step(params, {"w": np.zeros(2)}, AdamState(), lr=0.1)
        assert updated["w"].tolist() == [0.3, 0.7]

    def test_weight_decay_pulls_toward_zero(self):
        """With no gradient the parameter shrinks by exactly lr * weight_decay * p."""
        params = {"w": np.array([2.0])}
        updated, state = adaptive_gradient_step(
            params, {"w": np.zeros(1)}, AdamState(), lr=0.1, weight_decay=0.5
        )
        assert updated["w"][0] == pytest.approx(1.9)
        assert state.m["w"].tolist() == [0.0]

    def test_weight_decay_is_decoupled(self):
        """Decay stays out of the moments, so it adds to the normalized Adam step."""
        params = {"w": np.array([2.0])}
        updated, state = adaptive_gradient_step(
            params, {"w": np.array([100.0])}, AdamState(), lr=0.1, weight_decay=0.5
        )
        assert updated["w"][0] == pytest.approx(2.0 - 0.1 - 0.1, abs=1e-8)
        assert state.m["w"][0] == pytest.approx(10.0)

    def test_shape_mismatch(self):
        with pytest.raises(dc.ShapeError):
            adaptive_gradient_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState(), lr=0.1)

    def test_updates_leaves_in_place(self):
        w = dc.parameter([1.0, 1.0], label="w")
        optimizer = Adam([w], lr=0.5)
        loss = dc.reduce_sum(w * w)
        optimizer.step(dc.gradient(loss, [w]))
        assert w.value.tolist() == pytest.approx([0.5, 0.5])
        assert optimizer.state.t == 1


class TestDesignConfig:
    """Test design settings."""

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"learn": "everything"},
            {"init": "zeros"},
            {"batch_size": 0},
            {"steps": -1},
            {"unroll": 0},
            {"eval_batch": 0},
            {"refit_steps": -1},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            DesignConfig(**kwargs)

    def test_unknown_topology(self):
        with pytest.raises(TopologyError):
            DesignConfig(topology="ring:1x6")

    def test_start_state_must_exist(self):
        with pytest.raises(ValueError, match="s_init 19"):
            DesignConfig(topology="grid:3x6", interaction=InteractionConfig(s_init=19))
        with pytest.raises(ValueError):
            DesignConfig(topology="path:1x6", interaction=InteractionConfig(s_init=7))

    def test_last_state_is_a_valid_start(self):
        cfg = DesignConfig(topology="grid:3x6", interaction=InteractionConfig(s_init=18))
        assert cfg.interaction.init_index == 17

    def test_learn_flags(self):
        assert DesignConfig(learn="none").learn_reward is False
        assert DesignConfig(learn="reward").learn_transition is False
        assert DesignConfig().learn_transition is True

    def test_dict_round_trip(self, tiny_design):
        cfg = replace(tiny_design, prior=DiagonalUniform(), interaction=InteractionConfig(6, 2.5))
        assert DesignConfig.from_dict(cfg.to_dict()) == cfg


class TestMiLoss:
    """Test the variational objective."""

    def test_zero_network_loss(self):
        """Zero posterior: loss is log(2 pi) + 0.5 * mean squared trait norm."""
        _, mdp = sticky_path()
        traits = TraitBatch.from_exponents(np.array([[1.0, 1.0], [0.5, 1.5]]))
        soft = sample_trajectory_soft(
            mdp, traits, InteractionConfig(horizon=3), np.random.default_rng(0), unroll=5
        )
        net = PosteriorNet.zeros(3, 2, hidden_size=4)
        loss = mi_loss(traits.exponents(), soft, net).item()
        expected = math.log(2 * math.pi) + 0.5 * np.mean([2.0, 2.5])
        assert loss == pytest.approx(expected)

    def test_categorical_head_rejected(self):
        net = PosteriorNet(6, 2, hidden_size=4, head=CATEGORICAL)
        batch = TrajectoryBatch(np.zeros((1, 2), dtype=np.int64), np.zeros((1, 2), dtype=np.int64))
        with pytest.raises(ValueError):
            mi_loss(np.ones((1, 2)), batch, net)

    def test_end_to_end_gradient(self, numeric_gradient):
        """With frozen noise the loss gradient matches finite differences at every leaf."""
        params, mdp = sticky_path()
        traits = TraitBatch.from_exponents(np.array([[1.0, 1.0], [1.3, 0.6], [0.7, 1.3]]))
        cfg = InteractionConfig(horizon=3)
        rng = np.random.default_rng(7)
        noise = GumbelNoise.draw(rng, 3, cfg.horizon, 3, 2)
        soft = sample_trajectory_soft(mdp, traits, cfg, rng, noise=noise, unroll=8)
        net = PosteriorNet(3, 2, hidden_size=3, rng=rng)
        loss = mi_loss(traits.exponents(), soft, net)
        leaves = [params.reward, params.stick_logit, net.params["W_out"], net.params["W_z"]]
        analytic = dc.gradient(loss, leaves)
        for leaf in leaves:
            np.testing.assert_allclose(
                analytic[leaf], numeric_gradient(loss, leaf), rtol=1e-3, atol=1e-7
            )


class TestDesignGame:
    """Test complete design runs on tiny settings."""

    def test_tiny_run(self, tiny_design):
        report = design_game(tiny_design)
        assert len(report.loss_curve) == 3
        assert all(math.isfinite(v) for v in report.loss_curve)
        assert math.isfinite(report.final_loss)
        assert report.entropy_constant == pytest.approx(0.0)
        assert report.game().is_row_stochastic()

    def test_deterministic(self, tiny_design):
        first = design_game(tiny_design)
        second = design_game(tiny_design)
        assert first.loss_curve == second.loss_curve
        assert first.params.reward.value.tolist() == second.params.reward.value.tolist()

    def test_zero_steps(self, tiny_design):
        report = design_game(replace(tiny_design, steps=0))
        assert report.loss_curve == []
        assert math.isfinite(report.final_loss)

    def test_learn_none_keeps_baseline(self, tiny_design):
        cfg = replace(tiny_design, learn="none", init="baseline")
        report = design_game(cfg)
        assert report.params.trainable() == []
        assert report.params.reward.value.tolist() == [0.0, 0.0, -3.0, 0.0, 0.0, 5.0]
        assert report.params.stick_logit is None

    def test_learn_none_ignores_random_init(self):
        """A fixed game is the baseline even when init is left at its default."""
        cfg = DesignConfig(
            topology="path:1x6",
            learn="none",
            interaction=InteractionConfig(horizon=4),
            unroll=5,
            batch_size=4,
            steps=2,
            hidden_size=4,
            eval_batch=8,
            refit_steps=0,
            log_every=0,
        )
        assert cfg.init == "random"
        report = design_game(cfg)
        assert report.params.reward.value.tolist() == [0.0, 0.0, -3.0, 0.0, 0.0, 5.0]
        assert report.game().R.tolist() == [0.0, 0.0, -3.0, 0.0, 0.0, 5.0]

    def test_straight_through_run(self, tiny_design):
        report = design_game(replace(tiny_design, straight_through=True))
        assert len(report.loss_curve) == 3
        assert all(math.isfinite(v) for v in report.loss_curve)
        assert math.isfinite(report.final_loss)

    def test_learn_reward_moves_rewards_only(self, tiny_design):
        cfg = replace(tiny_design, learn="reward", init="baseline")
        report = design_game(cfg)
        assert report.params.stick_logit is None
        assert report.params.reward.value.tolist() != [0.0, 0.0, -3.0, 0.0, 0.0, 5.0]

    def test_mixture_prior_has_no_entropy(self, tiny_design):
        report = design_game(replace(tiny_design, prior=GaussianMixture(), steps=1))
        assert report.entropy_constant is None

    def test_progress_callback(self, tiny_design):
        seen: list[tuple[int, float]] = []
        design_game(tiny_design, progress=lambda step, loss: seen.append((step, loss)))
        assert [step for step, _ in seen] == [1, 2, 3]

    def test_refit_lowers_held_out_loss(self, tiny_design):
        """Refitting the posterior on hard play leaves the game alone and improves the score."""
        plain = replace(tiny_design, batch_size=16, eval_batch=256, refit_steps=0)
        fitted = design_game(replace(plain, refit_steps=150))
        unfitted = design_game(plain)
        assert fitted.loss_curve == unfitted.loss_curve
        assert fitted.params.reward.value.tolist() == unfitted.params.reward.value.tolist()
        assert fitted.final_loss < unfitted.final_loss

    def test_refit_divergence(self, tiny_design):
        failure = dc.NonFiniteError("exp overflow", op="exp")
        game = baseline_game("path:1x6")
        net = PosteriorNet(6, 2, hidden_size=4, rng=np.random.default_rng(0))
        with mock.patch("probe_core.designer.dc.gradient", side_effect=failure):
            with pytest.raises(DivergenceError) as info:
                refit_posterior(
                    game,
                    net,
                    tiny_design.prior,
                    tiny_design.interaction,
                    steps=3,
                    batch_size=4,
                    lr=0.01,
                    seed=0,
                )
        assert info.value.step == 1

    def test_divergence(self, tiny_design):
        failure = dc.NonFiniteError("log produced -inf", op="log")
        with mock.patch("probe_core.designer.mi_loss", side_effect=failure):
            with pytest.raises(DivergenceError) as info:
                design_game(tiny_design)
        assert info.value.step == 1


class TestExactInformation:
    """Test brute-force mutual information against the variational estimate."""

    def test_likelihoods_are_distributions(self):
        _, mdp = sticky_path()
        exact = exact_information(mdp, trait_grid(3), InteractionConfig(horizon=3))
        np.testing.assert_allclose(exact.likelihood.sum(axis=1), 1.0, atol=1e-12)

    def test_bounded_by_entropy(self):
        _, mdp = sticky_path()
        traits = trait_grid()
        exact = exact_information(mdp, traits, InteractionConfig(horizon=3))
        assert 0.0 <= exact.mutual_information <= math.log(len(traits)) + 1e-12
        assert exact.entropy == pytest.approx(math.log(25))

    def test_identical_players_reveal_nothing(self):
        _, mdp = sticky_path()
        traits = TraitBatch.from_exponents(np.tile([1.1, 0.9], (4, 1)))
        exact = exact_information(mdp, traits, InteractionConfig(horizon=3))
        assert exact.mutual_information == pytest.approx(0.0, abs=1e-12)

    def test_deterministic_path_enumerates_action_sequences(self):
        exact = exact_information(deterministic_path(), trait_grid(), InteractionConfig(horizon=3))
        assert len(exact.trajectories) == 2**3
        assert exact.mutual_information > 0.0

    @pytest.mark.parametrize("seed", range(10))
    def test_variational_estimate_is_a_lower_bound(self, seed):
        traits = trait_grid()
        exact = exact_information(deterministic_path(), traits, InteractionConfig(horizon=3))
        net = PosteriorNet(3, 2, hidden_size=4, rng=np.random.default_rng(seed))
        estimate = discrete_variational_estimate(exact, net, traits)
        assert estimate <= exact.mutual_information + 1e-9

    @pytest.mark.statistical
    @pytest.mark.parametrize("seed", range(10))
    def test_sampled_estimate_is_a_lower_bound(self, seed):
        """10^5 sampled (z, x) pairs stay below the exact information within 0.02."""
        traits = trait_grid()
        exact = exact_information(deterministic_path(), traits, InteractionConfig(horizon=3))
        net = PosteriorNet(3, 2, hidden_size=4, rng=np.random.default_rng(seed))
        sampled = sampled_variational_estimate(
            exact, net, traits, 100_000, np.random.default_rng([seed, 3])
        )
        assert sampled <= exact.mutual_information + 0.02
        assert sampled == pytest.approx(
            discrete_variational_estimate(exact, net, traits), abs=0.1
        )

    def test_sticky_game_bound(self):
        traits = trait_grid()
        _, mdp = sticky_path()
        exact = exact_information(mdp, traits, InteractionConfig(horizon=3))
        net = PosteriorNet(3, 2, hidden_size=4, rng=np.random.default_rng(5))
        assert discrete_variational_estimate(exact, net, traits) <= exact.mutual_information + 1e-9

    def test_zero_network_estimate_is_zero(self):
        """A posterior that ignores x gives a constant q and a zero estimate."""
        _, mdp = sticky_path()
        traits = trait_grid(3)
        exact = exact_information(mdp, traits, InteractionConfig(horizon=3))
        net = PosteriorNet.zeros(3, 2, hidden_size=4)
        estimate = discrete_variational_estimate(exact, net, traits)
        # q(z|x) is the same for every x, so E[log q] + H(Z) <= 0 with equality only if uniform
        assert estimate <= 1e-9


class TestSmoothedLoss:
    """Test the trailing moving average used to judge training trends."""

    def test_window(self):
        assert smoothed_loss([3.0, 1.0, 2.0, 6.0], window=3).tolist() == [3.0, 2.0, 2.0, 3.0]

    def test_short_curve_is_running_mean(self):
        assert smoothed_loss([4.0, 2.0], window=100).tolist() == [4.0, 3.0]

    def test_empty(self):
        assert smoothed_loss([]).size == 0

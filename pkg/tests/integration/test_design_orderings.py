"""
Integration tests for the orderings design runs are expected to show.

Runs reduced but complete designs on the path and grid families: training loss
trends, learned games against hand-designed baselines, and the Full against the
Diagonal prior. These take minutes, not seconds.
"""

from __future__ import annotations

import unittest
from dataclasses import replace

import pytest

from probe_core.designer import (
    LEARN_NONE,
    LEARN_REWARD,
    LEARN_REWARD_TRANSITION,
    DesignConfig,
    design_game,
    smoothed_loss,
)
from probe_core.interaction import InteractionConfig
from probe_core.players import DiagonalUniform, FullUniform

SEEDS = range(5)


def reduced_design(topology: str = "path:1x6", **overrides) -> DesignConfig:
    settings = dict(
        topology=topology,
        learn=LEARN_REWARD_TRANSITION,
        interaction=InteractionConfig(horizon=10),
        unroll=30,
        batch_size=32,
        steps=400,
        learning_rate=5e-3,
        hidden_size=16,
        eval_batch=512,
        refit_steps=150,
        log_every=0,
    )
    settings.update(overrides)
    return DesignConfig(**settings)


@pytest.mark.integration
@pytest.mark.slow
@pytest.mark.statistical
class TestDesignOrderings(unittest.TestCase):
    """Orderings that hold in most, not all, seeded runs."""

    def test_smoothed_loss_settles_over_final_half(self):
        """The 100-step average at the end is no higher than at the midpoint in 4 of 5 runs."""
        settled = 0
        for seed in SEEDS:
            curve = design_game(reduced_design(seed=seed)).loss_curve
            smooth = smoothed_loss(curve, window=100)
            settled += smooth[-1] <= smooth[len(smooth) // 2]
        self.assertGreaterEqual(settled, 4)

    def test_learned_path_games_beat_the_baseline(self):
        """Learned rewards (with or without stickiness) lower the held-out loss in 4 of 5 runs."""
        wins = 0
        for seed in SEEDS:
            base = design_game(reduced_design(learn=LEARN_NONE, seed=seed)).final_loss
            reward = design_game(reduced_design(learn=LEARN_REWARD, seed=seed)).final_loss
            both = design_game(reduced_design(seed=seed)).final_loss
            wins += reward < base and both < base
        self.assertGreaterEqual(wins, 4)

    def test_learned_grid_game_beats_the_baseline(self):
        cfg = reduced_design("grid:3x6", seed=0)
        learned = design_game(cfg).final_loss
        baseline = design_game(replace(cfg, learn=LEARN_NONE)).final_loss
        self.assertLess(learned, baseline)

    def test_diagonal_prior_gives_lower_design_loss(self):
        """A prior with half the area is easier to pin down from the same kind of game."""
        for learn in (LEARN_REWARD, LEARN_REWARD_TRANSITION):
            cfg = reduced_design(learn=learn, seed=1)
            full = design_game(replace(cfg, prior=FullUniform())).final_loss
            diagonal = design_game(replace(cfg, prior=DiagonalUniform())).final_loss
            self.assertLess(diagonal, full, learn)

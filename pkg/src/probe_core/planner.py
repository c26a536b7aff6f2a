"""
Distorted value iteration and the softmax policy.

Planning is unrolled for a fixed number of sweeps inside the diffcore graph, so the
design objective can differentiate through it. The value update keeps the hard max
(gradient flows through the maximizing action); only the policy uses a softmax.
Every function accepts a single PlayerTrait or a TraitBatch; batches add a leading
axis and plan for all traits at once.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from probe_core import diffcore as dc
from probe_core.gamespace import Mdp
from probe_core.players import TraitBatch, Traits, distort_vector

logger = logging.getLogger(__name__)

DESIGN_UNROLL = 50
INFERENCE_ITERATIONS = 200
INFERENCE_TOLERANCE = 1e-9


@dataclass
class ValueFunction:
    """State values V, shape (S,) or (B, S)."""

    values: dc.Node
    iterations: int
    residuals: list[float] = field(default_factory=list)

    @property
    def array(self) -> np.ndarray:
        return self.values.value


@dataclass
class Policy:
    """Action probabilities pi(a|s), shape (S, A) or (B, S, A), with the Q values behind them."""

    probs: dc.Node
    q: dc.Node

    @property
    def array(self) -> np.ndarray:
        return self.probs.value


def q_values(mdp: Mdp, perceived: dc.Node, values: dc.Node) -> dc.Node:
    """Q(s, a) = sum_s' T(s'|s, a) * (v(R(s')) + gamma * V(s'))."""
    n_states, n_actions = mdp.topology.n_states, mdp.topology.n_actions
    target = perceived + mdp.gamma * values
    batch_shape = target.shape[:-1]
    flat_t = dc.reshape(mdp.transition, (n_states * n_actions, n_states))
    q = dc.matmul(flat_t, dc.reshape(target, (*batch_shape, n_states, 1)))
    return dc.reshape(q, (*batch_shape, n_states, n_actions))


def _sweep(
    mdp: Mdp, perceived: dc.Node, iterations: int, tolerance: float | None
) -> ValueFunction:
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    values = dc.constant(np.zeros(perceived.shape))
    residuals: list[float] = []
    done = 0
    for done in range(1, iterations + 1):
        updated = dc.max_last(q_values(mdp, perceived, values))
        residual = float(np.max(np.abs(updated.value - values.value))) if values.size else 0.0
        residuals.append(residual)
        values = updated
        if tolerance is not None and residual < tolerance:
            break
    logger.debug(f"Value iteration stopped after {done} sweeps (residual {residuals[-1]:.2e})")
    return ValueFunction(values=values, iterations=done, residuals=residuals)


def value_iteration(
    mdp: Mdp,
    trait: Traits,
    iterations: int = DESIGN_UNROLL,
    tolerance: float | None = None,
) -> ValueFunction:
    """
    Run `iterations` sweeps of V(s) <- max_a Q(s, a) from V = 0 on the distorted rewards.

    With a `tolerance`, stops early once successive sweeps differ by less than it.
    """
    return _sweep(mdp, distort_vector(mdp.reward, trait), iterations, tolerance)


def softmax_policy(mdp: Mdp, trait: Traits, values: ValueFunction) -> Policy:
    """pi(a|s) = softmax over a of Q(s, a) under the distorted rewards."""
    q = q_values(mdp, distort_vector(mdp.reward, trait), values.values)
    return Policy(probs=dc.softmax(q), q=q)


def plan(
    mdp: Mdp,
    trait: Traits,
    iterations: int = DESIGN_UNROLL,
    tolerance: float | None = None,
) -> tuple[ValueFunction, Policy]:
    """Value iteration followed by the softmax policy, sharing the distorted rewards."""
    perceived = distort_vector(mdp.reward, trait)
    values = _sweep(mdp, perceived, iterations, tolerance)
    q = q_values(mdp, perceived, values.values)
    return values, Policy(probs=dc.softmax(q), q=q)


def inference_policy(mdp: Mdp, trait: Traits) -> Policy:
    """Converged policy for a fixed game: up to 200 sweeps with a 1e-9 early stop."""
    _, policy = plan(mdp.frozen(), trait, INFERENCE_ITERATIONS, INFERENCE_TOLERANCE)
    return policy


def inference_policies(mdp: Mdp, traits: TraitBatch, chunk: int = 128) -> np.ndarray:
    """(n, S, A) converged policies, planned `chunk` traits at a time to bound graph size."""
    n = len(traits)
    if n == 0:
        return np.zeros((0, mdp.topology.n_states, mdp.topology.n_actions))
    game = mdp.frozen()
    blocks = []
    for start in range(0, n, chunk):
        part = slice(start, start + chunk)
        batch = TraitBatch(traits.xi_pos[part], traits.xi_neg[part], traits.xi_ref[part])
        blocks.append(inference_policy(game, batch).array)
    return np.concatenate(blocks, axis=0)

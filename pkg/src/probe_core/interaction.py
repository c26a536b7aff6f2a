"""
Interaction model: how a planning player turns a policy into a trajectory.

Hard sampling (datasets, evaluation) uses the Gumbel-max trick with a noise parameter
lambda on action choice and lambda fixed to 1 on state transitions. Soft sampling
(design-time gradients) replaces each argmax with a temperature-tau softmax and
propagates a probability vector over states instead of a single state.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from probe_core import diffcore as dc
from probe_core.gamespace import Mdp
from probe_core.planner import DESIGN_UNROLL, Policy, plan
from probe_core.players import TraitBatch

logger = logging.getLogger(__name__)

# Added inside logs of mixtures so unreachable states stay finite
LOG_FLOOR = 1e-20


@dataclass(frozen=True)
class InteractionConfig:
    """Horizon L, action noise lambda, relaxation temperature tau, start state (1-based)."""

    horizon: int = 15
    lam: float = 1.0
    tau: float = 1.0
    s_init: int = 1

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.lam < 1.0:
            raise ValueError(f"lambda must be >= 1, got {self.lam}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.s_init < 1:
            raise ValueError(f"s_init is a 1-based state number, got {self.s_init}")

    @property
    def init_index(self) -> int:
        return self.s_init - 1


@dataclass
class Trajectory:
    """One hard trajectory of 0-based (state, action) indices."""

    states: np.ndarray
    actions: np.ndarray

    def __len__(self) -> int:
        return len(self.states)

    @property
    def steps(self) -> list[tuple[int, int]]:
        return [(int(s), int(a)) for s, a in zip(self.states, self.actions)]


@dataclass
class TrajectoryBatch:
    """n hard trajectories stored as (n, L) index arrays."""

    states: np.ndarray
    actions: np.ndarray

    def __len__(self) -> int:
        return len(self.states)

    def __getitem__(self, i: int) -> Trajectory:
        return Trajectory(self.states[i], self.actions[i])

    @property
    def horizon(self) -> int:
        return self.states.shape[1]

    @classmethod
    def from_trajectories(cls, trajectories: list[Trajectory]) -> TrajectoryBatch:
        return cls(
            states=np.stack([t.states for t in trajectories]).astype(np.int64),
            actions=np.stack([t.actions for t in trajectories]).astype(np.int64),
        )

    def subset(self, index: np.ndarray) -> TrajectoryBatch:
        return TrajectoryBatch(self.states[index], self.actions[index])

    def one_hot(self, n_states: int, n_actions: int) -> tuple[np.ndarray, np.ndarray]:
        """(n, L, S) state and (n, L, A) action encodings."""
        return np.eye(n_states)[self.states], np.eye(n_actions)[self.actions]


@dataclass
class SoftTrajectory:
    """
    Relaxed trajectories for a batch of B players.

    `states[t]` is a (B, S) node of state probabilities and `actions[t]` a (B, A)
    node of action probabilities; both carry gradients back to the game parameters.
    """

    states: list[dc.Node]
    actions: list[dc.Node]

    @property
    def horizon(self) -> int:
        return len(self.states)

    def hardened(self) -> TrajectoryBatch:
        """Most likely index at every step."""
        return TrajectoryBatch(
            states=np.stack([s.value.argmax(axis=-1) for s in self.states], axis=1),
            actions=np.stack([a.value.argmax(axis=-1) for a in self.actions], axis=1),
        )


@dataclass(frozen=True)
class GumbelNoise:
    """Pre-drawn Gumbel noise, shape (L, B, A) for actions and (L, B, S) for states."""

    actions: np.ndarray
    states: np.ndarray

    @classmethod
    def draw(
        cls, rng: np.random.Generator, batch: int, horizon: int, n_states: int, n_actions: int
    ) -> GumbelNoise:
        return cls(
            actions=rng.gumbel(size=(horizon, batch, n_actions)),
            states=rng.gumbel(size=(horizon, batch, n_states)),
        )


def tempered(u: np.ndarray, lam: float) -> np.ndarray:
    """Distribution of Gumbel-max choices at noise lambda: normalized u^(1/lambda)."""
    u = np.asarray(u, dtype=np.float64)
    powered = np.power(u, 1.0 / lam)
    return powered / powered.sum(axis=-1, keepdims=True)


def _log(u: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(u, dtype=np.float64))


def sample_action_hard(
    u: np.ndarray, lam: float, rng: np.random.Generator, noise: np.ndarray | None = None
) -> int:
    """
    argmax_i log(u_i) / lambda + g_i with g_i ~ Gumbel(0, 1).

    At lambda = 1 the choice follows u exactly; zero-probability entries are never
    selected.
    """
    if lam < 1.0:
        raise ValueError(f"lambda must be >= 1, got {lam}")
    g = rng.gumbel(size=np.shape(u)) if noise is None else noise
    return int(np.argmax(_log(u) / lam + g))


def sample_trajectory_hard(
    mdp: Mdp, policy: np.ndarray, cfg: InteractionConfig, rng: np.random.Generator
) -> Trajectory:
    """Roll out L steps from s_init under an (S, A) policy array."""
    transition = mdp.T
    states = np.empty(cfg.horizon, dtype=np.int64)
    actions = np.empty(cfg.horizon, dtype=np.int64)
    s = cfg.init_index
    for t in range(cfg.horizon):
        a = sample_action_hard(policy[s], cfg.lam, rng)
        states[t], actions[t] = s, a
        s = sample_action_hard(transition[s, a], 1.0, rng)
    return Trajectory(states, actions)


def instance_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for instance `index`, so results ignore the execution schedule."""
    return np.random.default_rng([seed, index])


def sample_trajectories_hard(
    mdp: Mdp, policies: np.ndarray, cfg: InteractionConfig, seed: int
) -> TrajectoryBatch:
    """One trajectory per (S, A) policy in `policies` (shape (n, S, A)), each on its own stream."""
    trajectories = [
        sample_trajectory_hard(mdp, policy, cfg, instance_rng(seed, i))
        for i, policy in enumerate(policies)
    ]
    if not trajectories:
        empty = np.zeros((0, cfg.horizon), dtype=np.int64)
        return TrajectoryBatch(empty, empty.copy())
    return TrajectoryBatch.from_trajectories(trajectories)


def replay_hard(
    mdp: Mdp, policies: np.ndarray, cfg: InteractionConfig, noise: GumbelNoise
) -> TrajectoryBatch:
    """Hard trajectories driven by pre-drawn noise; the tau -> 0 limit of the soft sampler."""
    batch = policies.shape[0]
    transition = mdp.T
    states = np.empty((batch, cfg.horizon), dtype=np.int64)
    actions = np.empty((batch, cfg.horizon), dtype=np.int64)
    for b in range(batch):
        s = cfg.init_index
        for t in range(cfg.horizon):
            a = int(np.argmax(_log(policies[b, s]) / cfg.lam + noise.actions[t, b]))
            states[b, t], actions[b, t] = s, a
            s = int(np.argmax(_log(transition[s, a]) + noise.states[t, b]))
    return TrajectoryBatch(states, actions)


def sample_trajectory_soft(
    mdp: Mdp,
    traits: TraitBatch,
    cfg: InteractionConfig,
    rng: np.random.Generator,
    policy: Policy | None = None,
    noise: GumbelNoise | None = None,
    unroll: int = DESIGN_UNROLL,
    straight_through: bool = False,
) -> SoftTrajectory:
    """
    Differentiable relaxed rollouts, one per trait in `traits`.

    The policy row at step t is the sigma_t-weighted mixture of per-state policies;
    the soft action is a Gumbel-softmax over log(mixture) / lambda; the soft next
    state is a Gumbel-softmax over the log of the action-weighted transition mixture.

    With `straight_through`, every sample is one-hot in the forward pass (the same
    trajectory replay_hard gives for this noise) while gradients flow through the
    softmax it was taken from.
    """
    n_states, n_actions = mdp.topology.n_states, mdp.topology.n_actions
    batch = len(traits)
    if policy is None:
        _, policy = plan(mdp, traits, unroll)
    if noise is None:
        noise = GumbelNoise.draw(rng, batch, cfg.horizon, n_states, n_actions)

    sigma = dc.constant(np.tile(np.eye(n_states)[cfg.init_index], (batch, 1)))
    flat_t = dc.reshape(mdp.transition, (n_states, n_actions * n_states))
    inv_tau = 1.0 / cfg.tau

    states: list[dc.Node] = []
    actions: list[dc.Node] = []
    for t in range(cfg.horizon):
        mixture = dc.reshape(
            dc.matmul(dc.reshape(sigma, (batch, 1, n_states)), policy.probs), (batch, n_actions)
        )
        logits = dc.log(mixture + LOG_FLOOR) * (1.0 / cfg.lam) + noise.actions[t]
        action = dc.softmax(logits * inv_tau)
        if straight_through:
            action = _harden(action)
        states.append(sigma)
        actions.append(action)
        if t + 1 == cfg.horizon:
            break
        reach = dc.reshape(dc.matmul(sigma, flat_t), (batch, n_actions, n_states))
        landing = dc.reshape(
            dc.matmul(dc.reshape(action, (batch, 1, n_actions)), reach), (batch, n_states)
        )
        sigma = dc.softmax((dc.log(landing + LOG_FLOOR) + noise.states[t]) * inv_tau)
        if straight_through:
            sigma = _harden(sigma)
    return SoftTrajectory(states=states, actions=actions)


def _harden(probs: dc.Node) -> dc.Node:
    """One-hot of the row argmax in value, identity in gradient."""
    value = probs.value
    one_hot = np.eye(value.shape[-1])[value.argmax(axis=-1)]
    return probs + (one_hot - value)


def state_marginals(mdp: Mdp, policy: np.ndarray, cfg: InteractionConfig) -> np.ndarray:
    """
    Exact (L, S) distribution of s_t under an (S, A) policy, by matrix powering.

    Action noise is included through the tempered policy.
    """
    acting = tempered(policy, cfg.lam)
    chain = np.einsum("sa,sat->st", acting, mdp.T)
    marginals = np.zeros((cfg.horizon, mdp.topology.n_states))
    marginals[0, cfg.init_index] = 1.0
    for t in range(1, cfg.horizon):
        marginals[t] = marginals[t - 1] @ chain
    return marginals

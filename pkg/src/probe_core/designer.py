"""
Game design by variational mutual-information maximization.

Each training step samples players from the prior, rolls out relaxed trajectories in
the current game, scores them with the recurrent posterior, and takes one Adam step
jointly on the game parameters and the posterior. Minimizing the loss
-E[log q(z|x)] maximizes the lower bound E[log q(z|x)] + H(Z) on I(Z; X).
Once the game is fixed, the posterior alone is refit on hard trajectories before the
held-out loss is measured.
"""

from __future__ import annotations

import itertools
import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import logsumexp

from probe_core import diffcore as dc
from probe_core.gamespace import (
    DEFAULT_GAMMA,
    GameParams,
    GameTopology,
    Mdp,
    baseline_game,
    initial_params,
    parse_topology,
    realize_mdp,
)
from probe_core.interaction import (
    InteractionConfig,
    SoftTrajectory,
    TrajectoryBatch,
    sample_trajectories_hard,
    sample_trajectory_soft,
    tempered,
)
from probe_core.planner import DESIGN_UNROLL, inference_policies
from probe_core.players import (
    DiagonalUniform,
    FullUniform,
    GaussianMixture,
    PriorSpec,
    TraitBatch,
    prior_from_dict,
)
from probe_core.posterior import DEFAULT_HIDDEN, GaussianOutput, PosteriorNet, gaussian_log_density

logger = logging.getLogger(__name__)

LEARN_NONE = "none"
LEARN_REWARD = "reward"
LEARN_REWARD_TRANSITION = "reward+transition"
LEARN_MODES = (LEARN_NONE, LEARN_REWARD, LEARN_REWARD_TRANSITION)
INIT_MODES = ("random", "baseline")

# Stream indices of the held-out evaluation batch and the posterior refit,
# next to the training stream 0
_EVAL_STREAM = 1
_REFIT_STREAM = 2


@dataclass
class DesignConfig:
    """Everything one design run needs: game family, prior, interaction model, optimizer."""

    topology: str = "grid:3x6"
    learn: str = LEARN_REWARD_TRANSITION
    init: str = "random"
    prior: PriorSpec = field(default_factory=FullUniform)
    interaction: InteractionConfig = field(default_factory=InteractionConfig)
    gamma: float = DEFAULT_GAMMA
    unroll: int = DESIGN_UNROLL
    batch_size: int = 64
    steps: int = 5000
    learning_rate: float = 1e-3
    hidden_size: int = DEFAULT_HIDDEN
    reward_l2: float = 0.0
    weight_decay: float = 0.0
    eval_batch: int = 1024
    refit_steps: int = 200
    refit_learning_rate: float = 1e-2
    straight_through: bool = False
    log_every: int = 250
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learn not in LEARN_MODES:
            raise ValueError(f"learn must be one of {LEARN_MODES}, got '{self.learn}'")
        if self.init not in INIT_MODES:
            raise ValueError(f"init must be one of {INIT_MODES}, got '{self.init}'")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if self.unroll < 1:
            raise ValueError(f"unroll must be >= 1, got {self.unroll}")
        if self.eval_batch < 1:
            raise ValueError(f"eval_batch must be >= 1, got {self.eval_batch}")
        if self.refit_steps < 0:
            raise ValueError(f"refit_steps must be >= 0, got {self.refit_steps}")
        topology = parse_topology(self.topology)
        if self.interaction.s_init > topology.n_states:
            raise ValueError(
                f"s_init {self.interaction.s_init} is outside {topology.spec} "
                f"(states 1..{topology.n_states})"
            )

    @property
    def learn_reward(self) -> bool:
        return self.learn != LEARN_NONE

    @property
    def learn_transition(self) -> bool:
        return self.learn == LEARN_REWARD_TRANSITION

    def to_dict(self) -> dict[str, Any]:
        return {
            "topology": self.topology,
            "learn": self.learn,
            "init": self.init,
            "prior": self.prior.to_dict(),
            "interaction": {
                "horizon": self.interaction.horizon,
                "lambda": self.interaction.lam,
                "tau": self.interaction.tau,
                "s_init": self.interaction.s_init,
            },
            "gamma": self.gamma,
            "unroll": self.unroll,
            "batch_size": self.batch_size,
            "steps": self.steps,
            "learning_rate": self.learning_rate,
            "hidden_size": self.hidden_size,
            "reward_l2": self.reward_l2,
            "weight_decay": self.weight_decay,
            "eval_batch": self.eval_batch,
            "refit_steps": self.refit_steps,
            "refit_learning_rate": self.refit_learning_rate,
            "straight_through": self.straight_through,
            "log_every": self.log_every,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> DesignConfig:
        data = dict(data)
        if "prior" in data:
            data["prior"] = prior_from_dict(data["prior"])
        if "interaction" in data:
            inter = data["interaction"]
            data["interaction"] = InteractionConfig(
                horizon=int(inter["horizon"]),
                lam=float(inter["lambda"]),
                tau=float(inter["tau"]),
                s_init=int(inter["s_init"]),
            )
        return cls(**data)


@dataclass
class DesignReport:
    """Outcome of a design run."""

    config: DesignConfig
    topology: GameTopology
    params: GameParams
    posterior: PosteriorNet
    loss_curve: list[float]
    final_loss: float
    entropy_constant: float | None

    def game(self) -> Mdp:
        """The learned game as a fixed MDP."""
        return realize_mdp(
            self.topology, self.params, self.config.learn_transition, self.config.gamma
        ).frozen()


@dataclass
class AdamState:
    """Moment estimates and step count of the adaptive-moment optimizer."""

    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adaptive_gradient_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """
    One bias-corrected Adam update; returns new parameter arrays and state.

    Weight decay is decoupled from the moments: each parameter also shrinks by
    lr * weight_decay * p, independent of its gradient history.
    """
    t = state.t + 1
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    new_params: dict[str, np.ndarray] = {}
    m: dict[str, np.ndarray] = {}
    v: dict[str, np.ndarray] = {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise dc.ShapeError(f"Gradient for {k} has shape {g.shape}, parameter {p.shape}")
        m[k] = beta1 * state.m.get(k, np.zeros_like(p)) + (1.0 - beta1) * g
        v[k] = beta2 * state.v.get(k, np.zeros_like(p)) + (1.0 - beta2) * (g * g)
        new_params[k] = p - lr * (m[k] / bc1) / (np.sqrt(v[k] / bc2) + eps)
        if weight_decay:
            new_params[k] = new_params[k] - lr * weight_decay * p
    return new_params, AdamState(t=t, m=m, v=v)


class Adam:
    """Applies adaptive_gradient_step to trainable graph leaves in place."""

    def __init__(self, params: list[dc.Node], lr: float = 1e-3, weight_decay: float = 0.0):
        self.params = {f"{i}:{p.label or 'param'}": p for i, p in enumerate(params)}
        self.lr = lr
        self.weight_decay = weight_decay
        self.state = AdamState()

    def step(self, grads: dict[dc.Node, np.ndarray]) -> None:
        values = {k: p.value for k, p in self.params.items()}
        updated, self.state = adaptive_gradient_step(
            values,
            {k: grads[p] for k, p in self.params.items()},
            self.state,
            self.lr,
            weight_decay=self.weight_decay,
        )
        for k, p in self.params.items():
            p.value[...] = updated[k]


def mi_loss(
    z: np.ndarray, trajectories: SoftTrajectory | TrajectoryBatch, net: PosteriorNet
) -> dc.Node:
    """-(1/B) sum_b log q(z_b | x_b); H(Z) is left out since it does not depend on theta."""
    output = net.encode(trajectories)
    if not isinstance(output, GaussianOutput):
        raise ValueError("mi_loss needs a Gaussian posterior head")
    return -dc.reduce_mean(gaussian_log_density(output, z))


def entropy_of_prior(spec: PriorSpec) -> float:
    """Differential entropy of a uniform prior: log of its support area."""
    if isinstance(spec, (FullUniform, DiagonalUniform)):
        return math.log(spec.area)
    raise UnsupportedPriorError(f"No closed-form entropy for prior '{spec.name}'")


def draw_traits(prior: PriorSpec, n: int, rng: np.random.Generator) -> TraitBatch:
    """Sample n traits from any prior, dropping mixture component labels."""
    if isinstance(prior, GaussianMixture):
        return prior.sample(n, rng)[0]
    return prior.sample(n, rng)


def _initial_game(
    cfg: DesignConfig, topology: GameTopology, rng: np.random.Generator
) -> GameParams:
    # A fixed game is always the hand-designed one, whatever init says
    if cfg.init == "baseline" or not cfg.learn_reward:
        reward = baseline_game(topology, cfg.gamma).R.copy()
        stick = np.zeros(topology.n_states) if cfg.learn_transition else None
        params = GameParams.from_arrays(reward, stick)
    else:
        params = initial_params(topology, rng, cfg.learn_transition)
    if not cfg.learn_reward:
        params = GameParams.from_arrays(params.reward.value, None, trainable=False)
    return params


def evaluate_design(
    mdp: Mdp,
    net: PosteriorNet,
    prior: PriorSpec,
    interaction: InteractionConfig,
    n: int,
    seed: int,
) -> float:
    """mi_loss on a fresh batch of n players with hard, one-hot encoded trajectories."""
    rng = np.random.default_rng([seed, _EVAL_STREAM])
    traits = draw_traits(prior, n, rng)
    game = mdp.frozen()
    policies = inference_policies(game, traits)
    batch = sample_trajectories_hard(game, policies, interaction, int(rng.integers(2**31)))
    return float(mi_loss(traits.exponents(), batch, net).item())


def refit_posterior(
    mdp: Mdp,
    net: PosteriorNet,
    prior: PriorSpec,
    interaction: InteractionConfig,
    steps: int,
    batch_size: int,
    lr: float,
    seed: int,
) -> list[float]:
    """
    Fit the posterior alone on hard trajectories from a frozen game.

    Training sees relaxed trajectories, but the held-out loss scores one-hot ones;
    this closes that gap before evaluation. Returns the per-step loss.

    Raises:
        DivergenceError: If a refit step produces non-finite values.
    """
    rng = np.random.default_rng([seed, _REFIT_STREAM])
    game = mdp.frozen()
    optimizer = Adam(net.parameters(), lr=lr)
    losses: list[float] = []
    for step in range(1, steps + 1):
        traits = draw_traits(prior, batch_size, rng)
        policies = inference_policies(game, traits)
        batch = sample_trajectories_hard(game, policies, interaction, int(rng.integers(2**31)))
        try:
            loss = mi_loss(traits.exponents(), batch, net)
            grads = dc.gradient(loss, net.parameters())
        except dc.NonFiniteError as e:
            raise DivergenceError(f"Posterior refit diverged at step {step}: {e}", step=step) from e
        optimizer.step(grads)
        losses.append(loss.item())
    if losses:
        logger.debug(f"Posterior refit: loss {losses[0]:.4f} -> {losses[-1]:.4f} in {steps} steps")
    return losses


def smoothed_loss(curve: list[float], window: int = 100) -> np.ndarray:
    """Trailing moving average; entry i averages curve[max(0, i - window + 1) : i + 1]."""
    values = np.asarray(curve, dtype=np.float64)
    if values.size == 0:
        return values
    sums = np.cumsum(values)
    ends = np.arange(values.size)
    starts = np.maximum(ends - window + 1, 0)
    totals = sums - np.where(starts > 0, sums[starts - 1], 0.0)
    return totals / (ends - starts + 1)


def design_game(
    cfg: DesignConfig,
    progress: Callable[[int, float], None] | None = None,
) -> DesignReport:
    """
    Learn game parameters (and the posterior) that maximize the MI lower bound.

    Args:
        cfg: Design settings.
        progress: Optional callback receiving (step, loss) after every update.

    Returns:
        DesignReport with learned parameters, the per-step loss curve and the final
        loss on a held-out batch of hard trajectories, scored after the posterior
        has been refit on hard play in the frozen game.

    Raises:
        DivergenceError: If the loss or any intermediate value becomes non-finite.
    """
    rng = np.random.default_rng(cfg.seed)
    topology = parse_topology(cfg.topology)
    params = _initial_game(cfg, topology, rng)
    net = PosteriorNet(
        topology.n_states, topology.n_actions, hidden_size=cfg.hidden_size, rng=rng
    )
    trainable = params.trainable() + net.parameters()
    optimizer = Adam(trainable, lr=cfg.learning_rate, weight_decay=cfg.weight_decay)

    try:
        entropy: float | None = entropy_of_prior(cfg.prior)
    except UnsupportedPriorError:
        entropy = None

    logger.info(
        f"Designing {topology.spec} (learn={cfg.learn}, prior={cfg.prior.name}) "
        f"for {cfg.steps} steps, batch {cfg.batch_size}"
    )

    curve: list[float] = []
    window: list[float] = []
    for step in range(1, cfg.steps + 1):
        try:
            traits = draw_traits(cfg.prior, cfg.batch_size, rng)
            mdp = realize_mdp(topology, params, cfg.learn_transition, cfg.gamma)
            soft = sample_trajectory_soft(
                mdp,
                traits,
                cfg.interaction,
                rng,
                unroll=cfg.unroll,
                straight_through=cfg.straight_through,
            )
            loss = mi_loss(traits.exponents(), soft, net)
            objective = loss
            if cfg.reward_l2 and cfg.learn_reward:
                objective = loss + cfg.reward_l2 * dc.reduce_mean(params.reward * params.reward)
            grads = dc.gradient(objective, trainable)
        except dc.NonFiniteError as e:
            raise DivergenceError(f"Design diverged at step {step}: {e}", step=step) from e

        value = loss.item()
        if not math.isfinite(value) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise DivergenceError(f"Design diverged at step {step}: loss {value}", step=step)
        optimizer.step(grads)
        curve.append(value)

        window.append(value)
        if len(window) > 100:
            window.pop(0)
        if cfg.log_every and step % cfg.log_every == 0:
            logger.info(f"step {step}/{cfg.steps}: loss {value:.4f} (avg100 {np.mean(window):.4f})")
        if progress:
            progress(step, value)

    final_mdp = realize_mdp(topology, params, cfg.learn_transition, cfg.gamma)
    refit_posterior(
        final_mdp,
        net,
        cfg.prior,
        cfg.interaction,
        cfg.refit_steps,
        cfg.batch_size,
        cfg.refit_learning_rate,
        cfg.seed,
    )
    final_loss = evaluate_design(
        final_mdp, net, cfg.prior, cfg.interaction, cfg.eval_batch, cfg.seed
    )
    logger.info(f"Final held-out loss for {topology.spec} ({cfg.learn}): {final_loss:.4f}")

    return DesignReport(
        config=cfg,
        topology=topology,
        params=params,
        posterior=net,
        loss_curve=curve,
        final_loss=final_loss,
        entropy_constant=entropy,
    )


@dataclass
class ExactInformation:
    """Brute-force I(Z; X) for a finite set of equally likely players."""

    mutual_information: float
    entropy: float
    trajectories: TrajectoryBatch
    likelihood: np.ndarray  # (players, trajectories) of p(x | z)


def exact_information(
    mdp: Mdp, traits: TraitBatch, interaction: InteractionConfig
) -> ExactInformation:
    """
    Enumerate every reachable trajectory and compute I(Z; X) exactly.

    Players are weighted uniformly. Only practical for tiny games: the number of
    trajectories grows as (S * A) ** L.
    """
    game = mdp.frozen()
    policies = tempered(inference_policies(game, traits), interaction.lam)
    n_states, n_actions = mdp.topology.n_states, mdp.topology.n_actions

    paths: list[tuple[list[int], list[int]]] = []

    def extend(states: list[int], actions: list[int]) -> None:
        s = states[-1]
        for a in range(n_actions):
            if len(states) == interaction.horizon:
                paths.append((states, actions + [a]))
                continue
            for nxt in range(n_states):
                if game.T[s, a, nxt] > 0:
                    extend(states + [nxt], actions + [a])

    extend([interaction.init_index], [])
    state_idx = np.array([p[0] for p in paths], dtype=np.int64)
    action_idx = np.array([p[1] for p in paths], dtype=np.int64)

    # p(x | z) = prod_t pi_z(a_t | s_t) * prod_t T(s_{t+1} | s_t, a_t)
    n = len(traits)
    transition_part = np.prod(
        game.T[state_idx[:, :-1], action_idx[:, :-1], state_idx[:, 1:]], axis=1
    )
    likelihood = np.stack(
        [np.prod(policies[i][state_idx, action_idx], axis=1) * transition_part for i in range(n)]
    )

    joint = likelihood / n
    marginal = joint.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(joint > 0, joint * np.log(likelihood / marginal), 0.0)
    info = float(terms.sum())
    logger.debug(f"Exact information over {len(paths)} trajectories and {n} players: {info:.4f}")
    return ExactInformation(
        mutual_information=info,
        entropy=math.log(n),
        trajectories=TrajectoryBatch(state_idx, action_idx),
        likelihood=likelihood,
    )


def discrete_variational_estimate(
    exact: ExactInformation, net: PosteriorNet, traits: TraitBatch
) -> float:
    """
    E[log q(z|x)] + H(Z) with q restricted to the finite player set.

    The Gaussian posterior is renormalized over the player points so it is a proper
    distribution on Z; the result can never exceed the exact mutual information.
    """
    log_q = discrete_log_posterior(exact, net, traits)
    joint = exact.likelihood / len(traits)
    expected = float(np.sum(joint * log_q.T))
    return expected + exact.entropy


def discrete_log_posterior(
    exact: ExactInformation, net: PosteriorNet, traits: TraitBatch
) -> np.ndarray:
    """(trajectories, players) log q(z_j | x_i), normalized over the player points."""
    output = net.encode(exact.trajectories)
    points = traits.exponents()
    scores = np.stack(
        [gaussian_log_density(output, np.tile(point, (len(exact.trajectories), 1))).value
         for point in points],
        axis=1,
    )
    return scores - logsumexp(scores, axis=1, keepdims=True)


def sampled_variational_estimate(
    exact: ExactInformation,
    net: PosteriorNet,
    traits: TraitBatch,
    n: int,
    rng: np.random.Generator,
) -> float:
    """
    Monte-Carlo version of discrete_variational_estimate from n sampled (z, x) pairs.

    z is uniform over the player points and x ~ p(x | z) over the enumerated
    trajectories.
    """
    log_q = discrete_log_posterior(exact, net, traits)
    players = np.bincount(rng.integers(len(traits), size=n), minlength=len(traits))
    total = 0.0
    for j, count in enumerate(players):
        row = exact.likelihood[j] / exact.likelihood[j].sum()
        total += float(rng.multinomial(count, row) @ log_q[:, j])
    return total / n + exact.entropy


class DivergenceError(Exception):
    """Raised when design training produces non-finite values."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class UnsupportedPriorError(Exception):
    """Raised when an operation has no closed form for the given prior."""

    pass

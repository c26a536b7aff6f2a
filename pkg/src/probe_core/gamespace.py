"""
Game space: Path/Grid topologies, the learnable game parameters, and their
realization into concrete MDPs.

States are numbered from 1 in row-major order starting at the bottom-left cell, so in
a 3x6 grid state 9 is the middle row, third column, and state 18 is the top-right
corner. Internally every array is indexed from 0 (state number minus one).
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Any

import numpy as np

from probe_core import diffcore as dc

logger = logging.getLogger(__name__)

DEFAULT_GAMMA = 0.95

STAY = "stay"
MOVE_RIGHT = "moveRight"
MOVE_UP = "moveUp"

TOPOLOGY_ACTIONS: dict[str, tuple[str, ...]] = {
    "path": (STAY, MOVE_RIGHT),
    "grid": (STAY, MOVE_RIGHT, MOVE_UP),
}

# Reward layouts of the hand-designed games, keyed by 1-based state number
BASELINE_REWARDS: dict[tuple[str, int, int], dict[int, float]] = {
    ("path", 1, 6): {3: -3.0, 6: 5.0},
    ("grid", 3, 6): {9: -3.0, 18: 5.0},
}


@dataclass(frozen=True)
class GameTopology:
    """Shape of a Path or Grid game and its ordered action list."""

    kind: str
    rows: int
    cols: int
    actions: tuple[str, ...]

    @property
    def n_states(self) -> int:
        return self.rows * self.cols

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def spec(self) -> str:
        return f"{self.kind}:{self.rows}x{self.cols}"

    def coords(self, index: int) -> tuple[int, int]:
        """(row, col) of a 0-based state index; row 0 is the bottom row."""
        return divmod(index, self.cols)

    def neighbor(self, index: int, action: int) -> int:
        """Deterministic target of `action` from 0-based `index`; moves off the edge self-loop."""
        row, col = self.coords(index)
        name = self.actions[action]
        if name == MOVE_RIGHT and col + 1 < self.cols:
            return index + 1
        if name == MOVE_UP and row + 1 < self.rows:
            return index + self.cols
        return index

    def neighbor_matrix(self, action: int) -> np.ndarray:
        """(S, S) 0/1 matrix of deterministic targets for one action."""
        matrix = np.zeros((self.n_states, self.n_states))
        for s in range(self.n_states):
            matrix[s, self.neighbor(s, action)] = 1.0
        return matrix

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "rows": self.rows, "cols": self.cols}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> GameTopology:
        return build_topology(data["kind"], int(data["rows"]), int(data["cols"]))


def build_topology(kind: str, rows: int, cols: int) -> GameTopology:
    """Create a Path (rows must be 1) or Grid topology."""
    kind = kind.lower()
    if kind not in TOPOLOGY_ACTIONS:
        raise TopologyError(f"Unknown topology kind '{kind}'. Choose from: path, grid")
    if rows < 1 or cols < 1:
        raise TopologyError(f"Dimensions must be positive, got {rows}x{cols}")
    if kind == "path" and rows != 1:
        raise TopologyError(f"A path has exactly one row, got {rows}")
    return GameTopology(kind=kind, rows=rows, cols=cols, actions=TOPOLOGY_ACTIONS[kind])


def parse_topology(spec: str) -> GameTopology:
    """Parse `path:1x6` or `grid:3x6` style strings."""
    match = re.fullmatch(r"\s*(\w+)\s*:\s*(\d+)\s*x\s*(\d+)\s*", spec)
    if not match:
        raise TopologyError(f"Cannot parse topology '{spec}'; expected e.g. path:1x6 or grid:3x6")
    kind, rows, cols = match.groups()
    return build_topology(kind, int(rows), int(cols))


@dataclass
class GameParams:
    """
    Learnable game parameters theta.

    `reward` is the per-state reward; `stick_logit` is the per-state logit of the
    probability that moveRight stays put (None when transitions are not learned).
    """

    reward: dc.Node
    stick_logit: dc.Node | None = None

    @classmethod
    def from_arrays(
        cls, reward: np.ndarray, stick_logit: np.ndarray | None = None, trainable: bool = True
    ) -> GameParams:
        make = dc.parameter if trainable else dc.constant
        return cls(
            reward=make(reward, label="reward"),
            stick_logit=None if stick_logit is None else make(stick_logit, label="stick_logit"),
        )

    @property
    def alpha(self) -> np.ndarray | None:
        """Stickiness probabilities logistic(stick_logit)."""
        if self.stick_logit is None:
            return None
        return 1.0 / (1.0 + np.exp(-self.stick_logit.value))

    def trainable(self) -> list[dc.Node]:
        nodes = [self.reward] + ([self.stick_logit] if self.stick_logit is not None else [])
        return [n for n in nodes if n.trainable]

    def to_dict(self) -> dict[str, Any]:
        return {
            "reward": self.reward.value.tolist(),
            "stick_logit": None if self.stick_logit is None else self.stick_logit.value.tolist(),
        }


def initial_params(
    topology: GameTopology, rng: np.random.Generator, learn_transition: bool
) -> GameParams:
    """Rewards ~ Normal(0, 0.01^2); stickiness logits 0 (alpha = 0.5)."""
    reward = rng.normal(0.0, 0.01, size=topology.n_states)
    stick = np.zeros(topology.n_states) if learn_transition else None
    return GameParams.from_arrays(reward, stick)


@dataclass
class Mdp:
    """A realized game (S, A, T, R, gamma); T and R are graph nodes."""

    topology: GameTopology
    transition: dc.Node
    reward: dc.Node
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self) -> None:
        if not 0.0 < self.gamma < 1.0:
            raise TopologyError(f"Discount must lie in (0, 1), got {self.gamma}")
        s, a = self.topology.n_states, self.topology.n_actions
        if self.transition.shape != (s, a, s) or self.reward.shape != (s,):
            raise dc.ShapeError(
                f"MDP tensors {self.transition.shape}/{self.reward.shape} do not match "
                f"topology {self.topology.spec}"
            )

    @property
    def T(self) -> np.ndarray:
        return self.transition.value

    @property
    def R(self) -> np.ndarray:
        return self.reward.value

    def is_row_stochastic(self, tol: float = 1e-9) -> bool:
        return bool(np.all(self.T >= 0) and np.allclose(self.T.sum(axis=-1), 1.0, atol=tol))

    def frozen(self) -> Mdp:
        """Copy with constant tensors, detached from any trainable parameters."""
        return Mdp(
            topology=self.topology,
            transition=dc.constant(self.T.copy(), label="transition"),
            reward=dc.constant(self.R.copy(), label="reward"),
            gamma=self.gamma,
        )

    @classmethod
    def from_arrays(
        cls, topology: GameTopology, transition: np.ndarray, reward: np.ndarray, gamma: float
    ) -> Mdp:
        return cls(
            topology=topology,
            transition=dc.constant(transition, label="transition"),
            reward=dc.constant(reward, label="reward"),
            gamma=gamma,
        )


def realize_mdp(
    topology: GameTopology,
    params: GameParams,
    learn_transition: bool,
    gamma: float = DEFAULT_GAMMA,
) -> Mdp:
    """
    Build the transition tensor T[s, a, s'] and reward vector from parameters.

    stay and moveUp are deterministic. With `learn_transition`, moveRight stays at s
    with probability alpha_s and advances otherwise; at the rightmost column both
    outcomes are s itself, so it self-loops with probability 1.
    """
    n = topology.n_states
    if params.reward.shape != (n,):
        raise dc.ShapeError(f"Expected {n} rewards, got shape {params.reward.shape}")
    stick = params.stick_logit if learn_transition else None
    if stick is not None and stick.shape != (n,):
        raise dc.ShapeError(f"Expected {n} stickiness logits, got shape {stick.shape}")

    blocks = []
    for a, name in enumerate(topology.actions):
        targets = topology.neighbor_matrix(a)
        if name == MOVE_RIGHT and stick is not None:
            alpha = dc.reshape(dc.sigmoid(stick), (n, 1))
            blocks.append(alpha * np.eye(n) + (1.0 - alpha) * targets)
        else:
            blocks.append(dc.constant(targets))
    transition = dc.stack(blocks, axis=1).named("transition")
    return Mdp(topology=topology, transition=transition, reward=params.reward, gamma=gamma)


def _deterministic(topology: GameTopology, reward: np.ndarray, gamma: float) -> Mdp:
    params = GameParams.from_arrays(reward, trainable=False)
    return realize_mdp(topology, params, learn_transition=False, gamma=gamma)


def baseline_game(topology: GameTopology | str, gamma: float = DEFAULT_GAMMA) -> Mdp:
    """Hand-designed game: -3 in the middle, +5 at the far end, 0 elsewhere."""
    if isinstance(topology, str):
        topology = parse_topology(topology)
    layout = BASELINE_REWARDS.get((topology.kind, topology.rows, topology.cols))
    if layout is None:
        raise TopologyError(
            f"No baseline game for {topology.spec}; supported: path:1x6, grid:3x6"
        )
    reward = np.zeros(topology.n_states)
    for state, value in layout.items():
        reward[state - 1] = value
    return _deterministic(topology, reward, gamma)


def random_game(
    topology: GameTopology | str, rng: np.random.Generator, gamma: float = DEFAULT_GAMMA
) -> Mdp:
    """Comparison game with i.i.d. Uniform[-5, 5] rewards and deterministic moves."""
    if isinstance(topology, str):
        topology = parse_topology(topology)
    return _deterministic(topology, rng.uniform(-5.0, 5.0, size=topology.n_states), gamma)


class TopologyError(Exception):
    """Raised for invalid or unsupported game topologies."""

    pass

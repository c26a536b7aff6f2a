"""
Recurrent posterior over player traits.

A single-layer gated recurrent network reads a trajectory one (state, action) step at
a time. Its final hidden state feeds either a Gaussian head (means of the two trait
exponents plus global log-variances) or a categorical head over player types.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Union

import numpy as np

from probe_core import diffcore as dc
from probe_core.interaction import SoftTrajectory, TrajectoryBatch
from probe_core.players import PlayerTrait

logger = logging.getLogger(__name__)

GAUSSIAN = "gaussian"
CATEGORICAL = "categorical"
TRAIT_DIMS = 2
DEFAULT_HIDDEN = 32
LOG_2PI = math.log(2.0 * math.pi)

_GATES = ("z", "r", "h")


@dataclass
class GaussianOutput:
    """Factored Gaussian q(z|x): (B, 2) means and shared (2,) log-variances."""

    mean: dc.Node
    log_var: dc.Node

    @property
    def variance(self) -> np.ndarray:
        return np.exp(self.log_var.value)


@dataclass
class CategoricalOutput:
    """Categorical over K player types, as (B, K) logits."""

    logits: dc.Node

    @property
    def probs(self) -> np.ndarray:
        shifted = np.exp(self.logits.value - self.logits.value.max(axis=-1, keepdims=True))
        return shifted / shifted.sum(axis=-1, keepdims=True)


PosteriorOutput = Union[GaussianOutput, CategoricalOutput]


class PosteriorNet:
    """
    Gated recurrent encoder with a Gaussian or categorical output head.

    Weights are drawn uniformly from [-a, a] with a = 1/sqrt(fan_in); the Gaussian
    log-variances start at 0 and the hidden state starts at zeros for every sequence.
    """

    def __init__(
        self,
        n_states: int,
        n_actions: int,
        hidden_size: int = DEFAULT_HIDDEN,
        head: str = GAUSSIAN,
        n_classes: int = 3,
        rng: np.random.Generator | None = None,
    ):
        if head not in (GAUSSIAN, CATEGORICAL):
            raise ValueError(f"Unknown head '{head}'")
        self.n_states = n_states
        self.n_actions = n_actions
        self.hidden_size = hidden_size
        self.head = head
        self.n_classes = n_classes if head == CATEGORICAL else TRAIT_DIMS
        rng = rng or np.random.default_rng(0)

        width = n_states + n_actions
        h = hidden_size
        self.params: dict[str, dc.Node] = {}
        for gate in _GATES:
            self._init(f"W_{gate}", (width, h), width, rng)
            self._init(f"U_{gate}", (h, h), h, rng)
            self._init(f"b_{gate}", (h,), h, rng)
        self._init("W_out", (h, self.n_classes), h, rng)
        self._init("b_out", (self.n_classes,), h, rng)
        if head == GAUSSIAN:
            self.params["log_var"] = dc.parameter(np.zeros(TRAIT_DIMS), label="log_var")

    def _init(self, name: str, shape: tuple[int, ...], fan_in: int, rng: np.random.Generator):
        bound = 1.0 / math.sqrt(fan_in)
        self.params[name] = dc.parameter(rng.uniform(-bound, bound, size=shape), label=name)

    @classmethod
    def zeros(cls, n_states: int, n_actions: int, **kwargs: Any) -> PosteriorNet:
        net = cls(n_states, n_actions, **kwargs)
        for node in net.params.values():
            node.value[...] = 0.0
        return net

    @property
    def input_width(self) -> int:
        return self.n_states + self.n_actions

    def parameters(self) -> list[dc.Node]:
        return list(self.params.values())

    def state_dict(self) -> dict[str, Any]:
        return {name: node.value.tolist() for name, node in self.params.items()}

    def load_state_dict(self, state: dict[str, Any]) -> None:
        missing = set(self.params) - set(state)
        if missing:
            raise KeyError(f"Posterior state is missing parameters: {sorted(missing)}")
        for name, node in self.params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != node.shape:
                raise dc.ShapeError(f"Parameter {name}: expected {node.shape}, got {value.shape}")
            node.value[...] = value

    def to_dict(self) -> dict[str, Any]:
        return {
            "head": self.head,
            "hidden_size": self.hidden_size,
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "n_classes": self.n_classes,
            "params": self.state_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> PosteriorNet:
        net = cls(
            int(data["n_states"]),
            int(data["n_actions"]),
            hidden_size=int(data["hidden_size"]),
            head=data["head"],
            n_classes=int(data.get("n_classes", 3)),
        )
        net.load_state_dict(data["params"])
        return net

    def _step(self, x: dc.Node, h: dc.Node) -> dc.Node:
        p = self.params
        z = dc.sigmoid(x @ p["W_z"] + h @ p["U_z"] + p["b_z"])
        r = dc.sigmoid(x @ p["W_r"] + h @ p["U_r"] + p["b_r"])
        n = dc.tanh(x @ p["W_h"] + (r * h) @ p["U_h"] + p["b_h"])
        return (1.0 - z) * n + z * h

    def _inputs(self, traj: TrajectoryBatch | SoftTrajectory) -> list[dc.Node]:
        if isinstance(traj, SoftTrajectory):
            inputs = [dc.concat([s, a], axis=-1) for s, a in zip(traj.states, traj.actions)]
        else:
            if traj.states.size and (
                traj.states.max() >= self.n_states or traj.actions.max() >= self.n_actions
            ):
                raise dc.ShapeError("Trajectory indices exceed the encoder's state/action space")
            states, actions = traj.one_hot(self.n_states, self.n_actions)
            inputs = [
                dc.constant(np.concatenate([states[:, t], actions[:, t]], axis=-1))
                for t in range(traj.horizon)
            ]
        for x in inputs:
            if x.shape[-1] != self.input_width:
                raise dc.ShapeError(
                    f"Encoder expects input width {self.input_width}, got {x.shape[-1]}"
                )
        return inputs

    def encode(self, traj: TrajectoryBatch | SoftTrajectory) -> PosteriorOutput:
        """Run the recurrence over every step and map the final hidden state to the head."""
        inputs = self._inputs(traj)
        batch = inputs[0].shape[0]
        h = dc.constant(np.zeros((batch, self.hidden_size)))
        for x in inputs:
            h = self._step(x, h)
        out = h @ self.params["W_out"] + self.params["b_out"]
        if self.head == GAUSSIAN:
            return GaussianOutput(mean=out, log_var=self.params["log_var"])
        return CategoricalOutput(logits=out)


def _trait_matrix(z: np.ndarray | PlayerTrait | list[PlayerTrait]) -> np.ndarray:
    if isinstance(z, PlayerTrait):
        return np.array([[z.xi_pos, z.xi_neg]])
    if isinstance(z, list):
        return np.array([[t.xi_pos, t.xi_neg] for t in z])
    return np.asarray(z, dtype=np.float64).reshape(-1, TRAIT_DIMS)


def gaussian_log_density(
    output: GaussianOutput, z: np.ndarray | PlayerTrait | list[PlayerTrait]
) -> dc.Node:
    """Per-row log q(z|x): sum over the two trait dimensions of univariate log densities."""
    diff = output.mean - _trait_matrix(z)
    inv_var = dc.exp(-output.log_var)
    terms = (output.log_var + LOG_2PI) + diff * diff * inv_var
    return dc.reduce_sum(terms, axis=-1) * -0.5


def categorical_log_prob(output: CategoricalOutput, labels: np.ndarray | int) -> dc.Node:
    """Per-row log-probability of `labels` under the categorical head."""
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    k = output.logits.shape[-1]
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise LabelError(f"Labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    picked = dc.log_softmax(output.logits) * np.eye(k)[labels]
    return dc.reduce_sum(picked, axis=-1)


class LabelError(ValueError):
    """Raised for class labels outside the categorical head's range."""

    pass

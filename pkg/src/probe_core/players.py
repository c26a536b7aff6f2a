"""
Prospect-theory player model.

A player is a set of distortion exponents describing how they shrink or magnify
gains and losses around a reference point. This module holds the distortion function,
the canonical player types, and the trait priors used for design and evaluation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Union

import numpy as np

from probe_core import diffcore as dc

logger = logging.getLogger(__name__)

# Mixture samples are clamped to this exponent range
EXPONENT_FLOOR = 0.05
EXPONENT_CEIL = 3.0


@dataclass(frozen=True)
class PlayerTrait:
    """Distortion parameters (xi_pos, xi_neg, xi_ref) of one player."""

    xi_pos: float
    xi_neg: float
    xi_ref: float = 0.0

    def __post_init__(self) -> None:
        if not (self.xi_pos > 0 and self.xi_neg > 0):
            raise TraitError(
                f"Exponents must be positive, got xi_pos={self.xi_pos}, xi_neg={self.xi_neg}"
            )

    def to_dict(self) -> dict[str, float]:
        return {"xi_pos": self.xi_pos, "xi_neg": self.xi_neg, "xi_ref": self.xi_ref}


@dataclass(frozen=True)
class LabeledTrait:
    """A trait together with the mixture component it was drawn from."""

    trait: PlayerTrait
    label: int


LOSS_NEUTRAL = PlayerTrait(1.0, 1.0)
GAIN_SEEKING = PlayerTrait(1.2, 0.7)
LOSS_AVERSE = PlayerTrait(0.7, 1.2)


def parse_trait(text: str) -> tuple[str, PlayerTrait]:
    """
    Read a named trait from the command line.

    Accepts a player type name ("loss-averse"), bare exponents ("1.1,0.9") or a
    labelled pair ("cautious=0.8,1.3"). Bare exponents are named after their values.

    Raises:
        TraitError: If the text is neither a known type nor two positive numbers.
    """
    text = text.strip()
    if text in PLAYER_TYPES:
        return text, PLAYER_TYPES[text]
    name, _, pair = text.rpartition("=")
    parts = pair.split(",")
    try:
        if len(parts) != 2:
            raise ValueError
        xi_pos, xi_neg = (float(p) for p in parts)
    except ValueError:
        raise TraitError(
            f"Cannot read trait '{text}': use a type ({', '.join(PLAYER_TYPES)}), "
            "'XI_POS,XI_NEG' or 'NAME=XI_POS,XI_NEG'"
        ) from None
    return name or f"({xi_pos:g}, {xi_neg:g})", PlayerTrait(xi_pos, xi_neg)


PLAYER_TYPES: dict[str, PlayerTrait] = {
    "loss-neutral": LOSS_NEUTRAL,
    "gain-seeking": GAIN_SEEKING,
    "loss-averse": LOSS_AVERSE,
}


@dataclass(frozen=True)
class TraitBatch:
    """Column-wise view of many traits, used for vectorised planning."""

    xi_pos: np.ndarray
    xi_neg: np.ndarray
    xi_ref: np.ndarray

    def __post_init__(self) -> None:
        if not (self.xi_pos.shape == self.xi_neg.shape == self.xi_ref.shape):
            raise TraitError("Trait columns must have equal lengths")
        if np.any(self.xi_pos <= 0) or np.any(self.xi_neg <= 0):
            raise TraitError("Exponents must be positive")

    @classmethod
    def from_traits(cls, traits: list[PlayerTrait] | tuple[PlayerTrait, ...]) -> TraitBatch:
        return cls(
            xi_pos=np.array([t.xi_pos for t in traits], dtype=np.float64),
            xi_neg=np.array([t.xi_neg for t in traits], dtype=np.float64),
            xi_ref=np.array([t.xi_ref for t in traits], dtype=np.float64),
        )

    @classmethod
    def from_exponents(cls, exponents: np.ndarray) -> TraitBatch:
        """Build from an (n, 2) array of (xi_pos, xi_neg) with xi_ref = 0."""
        exponents = np.asarray(exponents, dtype=np.float64).reshape(-1, 2)
        return cls(
            xi_pos=exponents[:, 0].copy(),
            xi_neg=exponents[:, 1].copy(),
            xi_ref=np.zeros(len(exponents)),
        )

    def __len__(self) -> int:
        return len(self.xi_pos)

    def exponents(self) -> np.ndarray:
        """(n, 2) array of (xi_pos, xi_neg): the latent z the posterior predicts."""
        return np.stack([self.xi_pos, self.xi_neg], axis=1)

    def traits(self) -> list[PlayerTrait]:
        return [
            PlayerTrait(float(p), float(n), float(r))
            for p, n, r in zip(self.xi_pos, self.xi_neg, self.xi_ref)
        ]


Traits = Union[PlayerTrait, TraitBatch]


def distort(r: float, trait: PlayerTrait) -> float:
    """Perceived value of reward `r` for a player with `trait`."""
    if r >= trait.xi_ref:
        return (r - trait.xi_ref) ** trait.xi_pos
    return -((trait.xi_ref - r) ** trait.xi_neg)


def distort_vector(rewards: dc.Node, trait: Traits) -> dc.Node:
    """
    Element-wise distortion of a per-state reward node.

    A single trait maps shape (S,) to (S,); a TraitBatch of n traits maps (S,) to (n, S).
    Gains and losses are routed through indicator masks so the power primitive only
    ever sees positive bases. At the reference point the gradient is 1 when
    xi_pos == 1 and 0 otherwise.
    """
    single = isinstance(trait, PlayerTrait)
    batch = TraitBatch.from_traits([trait]) if single else trait
    n_states = rewards.shape[-1]

    pos = batch.xi_pos[:, None]
    neg = batch.xi_neg[:, None]
    diff = dc.reshape(rewards, (1, n_states)) - batch.xi_ref[:, None]

    up = dc.indicator(diff, "gt")
    down = dc.indicator(diff, "lt")
    at_ref = dc.indicator(diff, "eq")

    gains = dc.power(diff * up + (1.0 - up), pos) * up
    losses = dc.power(-diff * down + (1.0 - down), neg) * down
    kink = diff * at_ref * (pos == 1.0).astype(np.float64)
    out = gains - losses + kink
    return dc.reshape(out, (n_states,)) if single else out


@dataclass(frozen=True)
class FullUniform:
    """Uniform prior over a box of (xi_pos, xi_neg); defaults to [0.5, 1.5]^2."""

    pos_low: float = 0.5
    pos_high: float = 1.5
    neg_low: float = 0.5
    neg_high: float = 1.5

    name = "full"

    def __post_init__(self) -> None:
        if not (0 <= self.pos_low < self.pos_high and 0 <= self.neg_low < self.neg_high):
            raise PriorError(f"Invalid box bounds: {self}")

    @property
    def area(self) -> float:
        return (self.pos_high - self.pos_low) * (self.neg_high - self.neg_low)

    def sample(self, n: int, rng: np.random.Generator) -> TraitBatch:
        pos = rng.uniform(self.pos_low, self.pos_high, size=n)
        neg = rng.uniform(self.neg_low, self.neg_high, size=n)
        return TraitBatch(xi_pos=pos, xi_neg=neg, xi_ref=np.zeros(n))

    def contains(self, trait: PlayerTrait) -> bool:
        return (
            self.pos_low <= trait.xi_pos <= self.pos_high
            and self.neg_low <= trait.xi_neg <= self.neg_high
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.name,
            "pos": [self.pos_low, self.pos_high],
            "neg": [self.neg_low, self.neg_high],
        }


@dataclass(frozen=True)
class DiagonalUniform:
    """
    Uniform prior over the union of two off-diagonal squares.

    Each square is picked with probability 1/2; they have equal area, so the
    mixture is uniform over the union.
    """

    squares: tuple[FullUniform, ...] = (
        FullUniform(0.5, 1.0, 1.0, 1.5),
        FullUniform(1.0, 1.5, 0.5, 1.0),
    )

    name = "diagonal"

    @property
    def area(self) -> float:
        return sum(square.area for square in self.squares)

    def sample(self, n: int, rng: np.random.Generator) -> TraitBatch:
        which = rng.integers(0, len(self.squares), size=n)
        pos = np.empty(n)
        neg = np.empty(n)
        for i, square in enumerate(self.squares):
            idx = np.flatnonzero(which == i)
            part = square.sample(len(idx), rng)
            pos[idx] = part.xi_pos
            neg[idx] = part.xi_neg
        return TraitBatch(xi_pos=pos, xi_neg=neg, xi_ref=np.zeros(n))

    def contains(self, trait: PlayerTrait) -> bool:
        return any(square.contains(trait) for square in self.squares)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.name, "squares": [s.to_dict() for s in self.squares]}


@dataclass(frozen=True)
class GaussianMixture:
    """Equal-weight isotropic Gaussian mixture over (xi_pos, xi_neg)."""

    means: tuple[tuple[float, float], ...] = (
        (LOSS_NEUTRAL.xi_pos, LOSS_NEUTRAL.xi_neg),
        (GAIN_SEEKING.xi_pos, GAIN_SEEKING.xi_neg),
        (LOSS_AVERSE.xi_pos, LOSS_AVERSE.xi_neg),
    )
    covariance: float = 0.1
    weights: tuple[float, ...] = field(default=())

    name = "mixture"

    def __post_init__(self) -> None:
        if not self.means:
            raise PriorError("Mixture needs at least one component")
        if self.covariance <= 0:
            raise PriorError(f"Covariance scalar must be positive, got {self.covariance}")
        if not self.weights:
            object.__setattr__(self, "weights", tuple([1.0 / len(self.means)] * len(self.means)))
        if len(self.weights) != len(self.means):
            raise PriorError("One weight per mixture component is required")
        if not math.isclose(sum(self.weights), 1.0, abs_tol=1e-9):
            raise PriorError(f"Mixture weights must sum to 1, got {sum(self.weights)}")

    @property
    def components(self) -> int:
        return len(self.means)

    def sample(self, n: int, rng: np.random.Generator) -> tuple[TraitBatch, np.ndarray]:
        labels = rng.choice(self.components, size=n, p=np.asarray(self.weights))
        centers = np.asarray(self.means, dtype=np.float64)[labels]
        draws = centers + math.sqrt(self.covariance) * rng.standard_normal((n, 2))
        clamped = np.clip(draws, EXPONENT_FLOOR, EXPONENT_CEIL)
        if n and np.any(clamped != draws):
            logger.debug(f"Clamped {int(np.sum(clamped != draws))} mixture exponents")
        return TraitBatch.from_exponents(clamped), labels.astype(np.int64)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.name,
            "means": [list(m) for m in self.means],
            "covariance": self.covariance,
            "weights": list(self.weights),
        }


PriorSpec = Union[FullUniform, DiagonalUniform, GaussianMixture]

PRIORS: dict[str, type] = {
    "full": FullUniform,
    "diagonal": DiagonalUniform,
}


def prior_from_name(name: str) -> PriorSpec:
    """Look up one of the named design priors (`full` or `diagonal`)."""
    try:
        return PRIORS[name.lower()]()
    except KeyError:
        raise PriorError(f"Unknown prior '{name}'. Choose from: {', '.join(PRIORS)}") from None


def prior_from_dict(data: dict[str, Any]) -> PriorSpec:
    kind = data.get("kind")
    if kind == "full":
        pos, neg = data.get("pos", [0.5, 1.5]), data.get("neg", [0.5, 1.5])
        return FullUniform(float(pos[0]), float(pos[1]), float(neg[0]), float(neg[1]))
    if kind == "diagonal":
        squares = data.get("squares")
        if not squares:
            return DiagonalUniform()
        return DiagonalUniform(tuple(prior_from_dict(s) for s in squares))  # type: ignore[arg-type]
    if kind == "mixture":
        return GaussianMixture(
            means=tuple(tuple(float(x) for x in m) for m in data["means"]),  # type: ignore[misc]
            covariance=float(data.get("covariance", 0.1)),
            weights=tuple(float(w) for w in data.get("weights", ())),
        )
    raise PriorError(f"Unknown prior kind: {kind}")


def sample_prior(spec: PriorSpec, n: int, rng: np.random.Generator) -> list[PlayerTrait]:
    """Draw `n` i.i.d. traits from a uniform design prior."""
    if n < 0:
        raise PriorError(f"Sample count must be non-negative, got {n}")
    if isinstance(spec, GaussianMixture):
        return [lt.trait for lt in sample_mixture(spec, n, rng)]
    return spec.sample(n, rng).traits()


def sample_mixture(spec: GaussianMixture, n: int, rng: np.random.Generator) -> list[LabeledTrait]:
    """Draw `n` labelled traits from the player-type mixture."""
    batch, labels = spec.sample(n, rng)
    return [LabeledTrait(trait, int(label)) for trait, label in zip(batch.traits(), labels)]


class TraitError(Exception):
    """Raised for traits with non-positive exponents."""

    pass


class PriorError(Exception):
    """Raised for malformed prior definitions."""

    pass

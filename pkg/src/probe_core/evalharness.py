"""
Downstream evaluation of designed games.

Players drawn from the three-type mixture play a fixed game; a recurrent classifier
learns to recover each player's type from one trajectory. Accuracy on held-out
players measures how diagnostic the game is.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from probe_core import diffcore as dc
from probe_core.designer import Adam, DesignConfig, design_game
from probe_core.gamespace import Mdp
from probe_core.interaction import InteractionConfig, TrajectoryBatch, sample_trajectories_hard
from probe_core.planner import inference_policies
from probe_core.players import GaussianMixture, PriorSpec
from probe_core.posterior import CATEGORICAL, DEFAULT_HIDDEN, PosteriorNet, categorical_log_prob

logger = logging.getLogger(__name__)

DEFAULT_SIZES = (1000, 100, 100)
DEFAULT_LAMBDAS = (1.0, 1.5, 2.5)
SPLITS = ("train", "val", "test")

# Values as published, keyed by table id. Accuracies are (mean, std).
PUBLISHED: dict[int, dict[str, Any]] = {
    1: {
        "baseline path:1x6": 0.111,
        "baseline grid:3x6": 0.115,
        "reward path:1x6": 0.108,
        "reward grid:3x6": 0.099,
        "reward+transition path:1x6": 0.107,
        "reward+transition grid:3x6": 0.078,
    },
    2: {
        "baseline path:1x6": (0.442, 0.056),
        "baseline grid:3x6": (0.482, 0.052),
        "reward path:1x6": (0.678, 0.044),
        "reward grid:3x6": (0.658, 0.066),
        "reward+transition path:1x6": (0.686, 0.044),
        "reward+transition grid:3x6": (0.822, 0.027),
    },
    3: {
        ("baseline path:1x6", 1.0): (0.442, 0.056),
        ("baseline path:1x6", 1.5): (0.510, 0.053),
        ("baseline path:1x6", 2.5): (0.482, 0.041),
        ("reward path:1x6", 1.0): (0.678, 0.044),
        ("reward path:1x6", 1.5): (0.678, 0.039),
        ("reward path:1x6", 2.5): (0.650, 0.048),
        ("reward+transition grid:3x6", 1.0): (0.822, 0.027),
        ("reward+transition grid:3x6", 1.5): (0.778, 0.044),
        ("reward+transition grid:3x6", 2.5): (0.730, 0.061),
    },
    4: {
        ("reward path:1x6", "full"): (0.108, (0.678, 0.044)),
        ("reward path:1x6", "diagonal"): (0.043, (0.658, 0.034)),
        ("reward grid:3x6", "full"): (0.099, (0.658, 0.066)),
        ("reward grid:3x6", "diagonal"): (0.039, (0.662, 0.060)),
        ("reward+transition path:1x6", "full"): (0.107, (0.686, 0.044)),
        ("reward+transition path:1x6", "diagonal"): (0.043, (0.668, 0.048)),
        ("reward+transition grid:3x6", "full"): (0.078, (0.822, 0.027)),
        ("reward+transition grid:3x6", "diagonal"): (0.036, (0.712, 0.051)),
    },
}


@dataclass
class Split:
    """Trajectories with their player-type labels."""

    trajectories: TrajectoryBatch
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)


@dataclass
class Dataset:
    """Train/validation/test splits generated from one fixed game."""

    train: Split
    val: Split
    test: Split
    game: Mdp
    mixture: GaussianMixture
    lam: float
    seed: int

    @property
    def n_classes(self) -> int:
        return self.mixture.components

    @property
    def sizes(self) -> tuple[int, int, int]:
        return (len(self.train), len(self.val), len(self.test))

    def split(self, name: str) -> Split:
        if name not in SPLITS:
            raise KeyError(f"Unknown split '{name}'")
        return getattr(self, name)

    def with_shuffled_labels(self, seed: int) -> Dataset:
        """Copy whose labels are permuted within each split; breaks any label signal."""
        rng = np.random.default_rng(seed)
        shuffled = {
            name: Split(self.split(name).trajectories, rng.permutation(self.split(name).labels))
            for name in SPLITS
        }
        return replace(self, **shuffled)


@dataclass
class EvalSettings:
    """Classifier training and evaluation settings."""

    sizes: tuple[int, int, int] = DEFAULT_SIZES
    epochs: int = 20
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    batch_size: int = 32
    learning_rate: float = 1e-3
    hidden_size: int = DEFAULT_HIDDEN
    regenerate_per_round: bool = False
    dataset_seed: int = 1234
    workers: int = 1

    def __post_init__(self) -> None:
        if len(self.sizes) != 3 or any(s < 1 for s in self.sizes):
            raise ValueError(f"sizes must be three positive counts, got {self.sizes}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not self.seeds:
            raise ValueError("At least one seed is required")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "sizes": list(self.sizes),
            "epochs": self.epochs,
            "seeds": list(self.seeds),
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "hidden_size": self.hidden_size,
            "regenerate_per_round": self.regenerate_per_round,
            "dataset_seed": self.dataset_seed,
        }


@dataclass
class RoundResult:
    seed: int
    test_accuracy: float
    best_epoch: int
    val_accuracy: float


@dataclass
class EvalReport:
    """Per-seed test accuracies and their aggregate."""

    rounds: list[RoundResult]
    config: dict[str, Any] = field(default_factory=dict)

    @property
    def accuracies(self) -> list[float]:
        return [r.test_accuracy for r in self.rounds]

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        """Sample standard deviation over seeds (0 for a single seed)."""
        if len(self.rounds) < 2:
            return 0.0
        return float(np.std(self.accuracies, ddof=1))

    def summary(self) -> str:
        return f"{self.mean:.3f} ({self.std:.3f})"

    def to_dict(self) -> dict[str, Any]:
        return {
            "accuracies": self.accuracies,
            "best_epochs": [r.best_epoch for r in self.rounds],
            "val_accuracies": [r.val_accuracy for r in self.rounds],
            "seeds": [r.seed for r in self.rounds],
            "mean": self.mean,
            "std": self.std,
            "config": self.config,
        }


def generate_dataset(
    game: Mdp,
    mixture: GaussianMixture,
    sizes: Sequence[int] = DEFAULT_SIZES,
    interaction: InteractionConfig | None = None,
    seed: int = 0,
) -> Dataset:
    """
    Simulate labelled players in a fixed game.

    Each instance draws a (trait, label) pair from the mixture, plans with the
    converged planner and records one hard trajectory at the configured noise.
    """
    interaction = interaction or InteractionConfig()
    if len(sizes) != 3 or any(int(s) < 1 for s in sizes):
        raise ValueError(f"sizes must be three positive counts, got {tuple(sizes)}")
    n_train, n_val, n_test = (int(s) for s in sizes)
    total = n_train + n_val + n_test

    rng = np.random.default_rng(seed)
    traits, labels = mixture.sample(total, rng)
    frozen = game.frozen()
    policies = inference_policies(frozen, traits)
    batch = sample_trajectories_hard(frozen, policies, interaction, int(rng.integers(2**31)))

    bounds = {
        "train": (0, n_train),
        "val": (n_train, n_train + n_val),
        "test": (n_train + n_val, total),
    }
    splits = {
        name: Split(batch.subset(np.arange(lo, hi)), labels[lo:hi])
        for name, (lo, hi) in bounds.items()
    }
    logger.debug(f"Generated dataset {n_train}/{n_val}/{n_test} at lambda={interaction.lam}")
    return Dataset(**splits, game=frozen, mixture=mixture, lam=interaction.lam, seed=seed)


def accuracy(net: PosteriorNet, split: Split) -> float:
    """Fraction of trajectories whose most likely class equals the label."""
    if len(split) == 0:
        return 0.0
    logits = net.encode(split.trajectories).logits.value  # type: ignore[union-attr]
    return float(np.mean(np.argmax(logits, axis=-1) == split.labels))


def _check_dataset(data: Dataset) -> None:
    classes = np.unique(data.train.labels)
    if len(classes) < 2:
        raise DegenerateDatasetError(
            f"Training split holds a single class ({classes.tolist()}); accuracy is meaningless"
        )
    for name in SPLITS:
        labels = data.split(name).labels
        if labels.size and (labels.min() < 0 or labels.max() >= data.n_classes):
            raise DegenerateDatasetError(f"Split '{name}' has labels outside [0, {data.n_classes})")


def train_round(data: Dataset, seed: int, settings: EvalSettings) -> RoundResult:
    """
    Train one categorical classifier and report test accuracy at the best validation epoch.

    Ties in validation accuracy keep the earliest epoch.
    """
    _check_dataset(data)
    rng = np.random.default_rng(seed)
    topology = data.game.topology
    net = PosteriorNet(
        topology.n_states,
        topology.n_actions,
        hidden_size=settings.hidden_size,
        head=CATEGORICAL,
        n_classes=data.n_classes,
        rng=rng,
    )
    optimizer = Adam(net.parameters(), lr=settings.learning_rate)
    train = data.train

    best_val, best_epoch, best_state = -1.0, 0, net.state_dict()
    for epoch in range(1, settings.epochs + 1):
        order = rng.permutation(len(train))
        for start in range(0, len(train), settings.batch_size):
            index = order[start : start + settings.batch_size]
            output = net.encode(train.trajectories.subset(index))
            log_prob = categorical_log_prob(output, train.labels[index])  # type: ignore[arg-type]
            loss = -dc.reduce_mean(log_prob)
            optimizer.step(dc.gradient(loss, net.parameters()))
        val_acc = accuracy(net, data.val)
        logger.debug(f"seed {seed} epoch {epoch}: val accuracy {val_acc:.3f}")
        if val_acc > best_val:
            best_val, best_epoch, best_state = val_acc, epoch, net.state_dict()

    net.load_state_dict(best_state)
    test_acc = accuracy(net, data.test)
    logger.info(
        f"seed {seed}: test accuracy {test_acc:.3f} (epoch {best_epoch}, val {best_val:.3f})"
    )
    return RoundResult(
        seed=seed, test_accuracy=test_acc, best_epoch=best_epoch, val_accuracy=best_val
    )


def _fan_out(fn: Callable[[Any], Any], items: Sequence[Any], workers: int) -> list[Any]:
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def train_classifier(data: Dataset, settings: EvalSettings | None = None) -> EvalReport:
    """One training round per seed on a shared dataset; rounds may run concurrently."""
    settings = settings or EvalSettings()
    _check_dataset(data)
    rounds = _fan_out(
        lambda s: train_round(data, s, settings), list(settings.seeds), settings.workers
    )
    report = EvalReport(rounds=rounds, config={**settings.to_dict(), "lambda": data.lam})
    logger.info(f"Classification accuracy: {report.summary()}")
    return report


def evaluate_game(
    game: Mdp,
    mixture: GaussianMixture,
    interaction: InteractionConfig,
    settings: EvalSettings,
) -> EvalReport:
    """
    Dataset generation plus classifier training for one game.

    With `regenerate_per_round`, every seed gets its own dataset drawn with
    `dataset_seed + seed`; otherwise all rounds share one dataset.
    """
    if not settings.regenerate_per_round:
        data = generate_dataset(game, mixture, settings.sizes, interaction, settings.dataset_seed)
        return train_classifier(data, settings)

    def one_round(seed: int) -> RoundResult:
        data = generate_dataset(
            game, mixture, settings.sizes, interaction, settings.dataset_seed + seed
        )
        return train_round(data, seed, settings)

    rounds = _fan_out(one_round, list(settings.seeds), settings.workers)
    report = EvalReport(rounds=rounds, config={**settings.to_dict(), "lambda": interaction.lam})
    logger.info(f"Classification accuracy: {report.summary()}")
    return report


def noise_sweep(
    games: dict[str, Mdp],
    lambdas: Sequence[float] = DEFAULT_LAMBDAS,
    mixture: GaussianMixture | None = None,
    interaction: InteractionConfig | None = None,
    settings: EvalSettings | None = None,
) -> dict[tuple[str, float], EvalReport]:
    """Accuracy for every (game, lambda) cell."""
    mixture = mixture or GaussianMixture()
    interaction = interaction or InteractionConfig()
    settings = settings or EvalSettings()
    table: dict[tuple[str, float], EvalReport] = {}
    for name, game in games.items():
        for lam in lambdas:
            logger.info(f"Noise sweep cell: {name} at lambda={lam}")
            cell = replace(interaction, lam=float(lam))
            table[(name, float(lam))] = evaluate_game(game, mixture, cell, settings)
    return table


@dataclass
class AblationCell:
    method: str
    prior: str
    design_loss: float
    report: EvalReport


def method_key(topology: str, learn: str) -> str:
    """Row key used in tables, e.g. `reward+transition grid:3x6`."""
    return f"{learn} {topology}"


def prior_ablation(
    methods: Sequence[tuple[str, str]],
    priors: dict[str, PriorSpec],
    design: DesignConfig,
    mixture: GaussianMixture | None = None,
    settings: EvalSettings | None = None,
) -> list[AblationCell]:
    """
    Design under each prior, then classify with the standard mixture.

    `methods` holds (topology, learn) pairs; every other design setting comes from
    `design`.
    """
    mixture = mixture or GaussianMixture()
    settings = settings or EvalSettings()
    cells: list[AblationCell] = []
    for topology, learn in methods:
        for prior_name, prior in priors.items():
            cfg = replace(design, topology=topology, learn=learn, prior=prior)
            result = design_game(cfg)
            report = evaluate_game(result.game(), mixture, design.interaction, settings)
            cells.append(
                AblationCell(
                    method=method_key(topology, learn),
                    prior=prior_name,
                    design_loss=result.final_loss,
                    report=report,
                )
            )
    return cells


def chance_band(n: int, classes: int = 3, sigmas: float = 3.0) -> tuple[float, float]:
    """Binomial band around chance accuracy for n test items."""
    p = 1.0 / classes
    half = sigmas * math.sqrt(p * (1.0 - p) / n)
    return p - half, p + half


class DegenerateDatasetError(Exception):
    """Raised when a dataset cannot support a meaningful accuracy."""

    pass

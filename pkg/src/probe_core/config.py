"""
Configuration management for probe-core.

Supports configuration via YAML files, environment variables, and command-line
overrides.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import psutil
import yaml

from probe_core.designer import DesignConfig
from probe_core.evalharness import DEFAULT_LAMBDAS, DEFAULT_SIZES, EvalSettings
from probe_core.gamespace import TopologyError
from probe_core.interaction import InteractionConfig
from probe_core.players import GaussianMixture, PriorError, prior_from_name

DEFAULT_CONFIG_PATHS = [
    Path.home() / ".config" / "probe-core" / "config.yaml",
    Path("probe-config.yaml"),
]

# Mapping from nested YAML sections to flat attribute names
NESTED_TO_FLAT: dict[tuple[str, str], str] = {
    ("game", "topology"): "topology",
    ("game", "learn"): "learn",
    ("game", "init"): "init",
    ("game", "gamma"): "gamma",
    ("interaction", "horizon"): "horizon",
    ("interaction", "lambda"): "lam",
    ("interaction", "tau"): "tau",
    ("interaction", "s_init"): "s_init",
    ("design", "prior"): "prior",
    ("design", "unroll"): "unroll",
    ("design", "batch_size"): "batch_size",
    ("design", "steps"): "steps",
    ("design", "learning_rate"): "learning_rate",
    ("design", "reward_l2"): "reward_l2",
    ("design", "weight_decay"): "weight_decay",
    ("design", "log_every"): "log_every",
    ("design", "eval_batch"): "eval_batch",
    ("design", "refit_steps"): "refit_steps",
    ("design", "refit_learning_rate"): "refit_learning_rate",
    ("design", "straight_through"): "straight_through",
    ("posterior", "hidden_size"): "hidden_size",
    ("evaluation", "sizes"): "eval_sizes",
    ("evaluation", "epochs"): "eval_epochs",
    ("evaluation", "seeds"): "eval_seeds",
    ("evaluation", "batch_size"): "eval_batch_size",
    ("evaluation", "learning_rate"): "eval_learning_rate",
    ("evaluation", "lambdas"): "eval_lambdas",
    ("evaluation", "regenerate_per_round"): "regenerate_per_round",
    ("evaluation", "dataset_seed"): "dataset_seed",
    ("evaluation", "mixture_means"): "mixture_means",
    ("evaluation", "mixture_covariance"): "mixture_covariance",
    ("output", "dir"): "output_dir",
    ("logging", "level"): "log_level",
    ("logging", "file"): "log_file",
    ("run", "seed"): "seed",
    ("run", "workers"): "workers",
}

ENV_MAPPINGS = {
    "PROBE_OUTPUT_DIR": "output_dir",
    "PROBE_LOG_LEVEL": "log_level",
    "PROBE_SEED": "seed",
}


@dataclass
class Config:
    """
    Configuration container for probe-core.

    Priority (highest to lowest):
    1. Command-line overrides applied with `with_overrides`
    2. Environment variables (prefixed with PROBE_)
    3. Config file values
    4. Default values
    """

    # Game family
    topology: str = "grid:3x6"
    learn: str = "reward+transition"
    init: str = "random"
    gamma: float = 0.95

    # Interaction model
    horizon: int = 15
    lam: float = 1.0
    tau: float = 1.0
    s_init: int = 1

    # Design training
    prior: str = "full"
    unroll: int = 50
    batch_size: int = 64
    steps: int = 5000
    learning_rate: float = 1e-3
    reward_l2: float = 0.0
    weight_decay: float = 0.0
    log_every: int = 250
    eval_batch: int = 1024
    refit_steps: int = 200
    refit_learning_rate: float = 1e-2
    straight_through: bool = False

    # Posterior network
    hidden_size: int = 32

    # Downstream evaluation
    eval_sizes: list[int] = field(default_factory=lambda: list(DEFAULT_SIZES))
    eval_epochs: int = 20
    eval_seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    eval_batch_size: int = 32
    eval_learning_rate: float = 1e-3
    eval_lambdas: list[float] = field(default_factory=lambda: list(DEFAULT_LAMBDAS))
    regenerate_per_round: bool = False
    dataset_seed: int = 1234
    mixture_means: list[list[float]] = field(
        default_factory=lambda: [list(m) for m in GaussianMixture().means]
    )
    mixture_covariance: float = 0.1

    # Output settings
    output_dir: str = "probe-output"

    # Logging
    log_level: str = "INFO"
    log_file: str | None = None

    # Run
    seed: int = 0
    workers: int = 0

    @classmethod
    def from_file(cls, path: str | Path) -> Config:
        """Load configuration from a YAML file."""
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}")

        try:
            with open(path) as f:
                data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Config file {path} is not valid YAML: {e}") from e

        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Config:
        """
        Create config from a dictionary.

        Accepts nested sections (as written by `to_dict`) or flat attribute names.
        Unknown sections or keys raise ConfigError.
        """
        if not isinstance(data, dict):
            raise ConfigError("Configuration must be a mapping")
        known_fields = {f.name for f in fields(cls)}
        sections = {section for section, _ in NESTED_TO_FLAT}

        flat: dict[str, Any] = {}
        for key, value in data.items():
            if isinstance(value, dict):
                if key not in sections:
                    raise ConfigError(f"Unknown config section '{key}'")
                for subkey, subvalue in value.items():
                    flat_key = NESTED_TO_FLAT.get((key, subkey))
                    if flat_key is None:
                        raise ConfigError(f"Unknown config key '{key}.{subkey}'")
                    flat[flat_key] = subvalue
            elif key in known_fields:
                flat[key] = value
            else:
                raise ConfigError(f"Unknown config key '{key}'")

        config = cls(**flat)
        config.validate()
        return config

    @classmethod
    def load(cls, config_path: str | Path | None = None) -> Config:
        """
        Load configuration with full resolution order.

        Args:
            config_path: Explicit path to config file. If None, searches
                        default locations.

        Returns:
            Fully resolved Config instance.
        """
        if config_path:
            config = cls.from_file(config_path)
        else:
            config = cls()
            for path in DEFAULT_CONFIG_PATHS:
                if path.exists():
                    config = cls.from_file(path)
                    break

        config._apply_env_overrides()
        config.validate()
        return config

    def _apply_env_overrides(self) -> None:
        """Apply environment variable overrides."""
        for env_var, attr in ENV_MAPPINGS.items():
            value = os.environ.get(env_var)
            if value is not None:
                try:
                    current = getattr(self, attr)
                    if isinstance(current, int):
                        setattr(self, attr, int(value))
                    else:
                        setattr(self, attr, value)
                except (ValueError, AttributeError):
                    # Skip invalid values, keep existing value
                    pass

    def with_overrides(self, **overrides: Any) -> Config:
        """Copy with command-line values applied; None means 'not given'."""
        known_fields = {f.name for f in fields(self)}
        unknown = set(overrides) - known_fields
        if unknown:
            raise ConfigError(f"Unknown override(s): {', '.join(sorted(unknown))}")
        updated = replace(self, **{k: v for k, v in overrides.items() if v is not None})
        updated.validate()
        return updated

    def validate(self) -> None:
        """Build every derived config once so bad values fail early."""
        try:
            self.design_config()
            self.eval_settings()
        except (ValueError, TypeError, TopologyError, PriorError) as e:
            raise ConfigError(f"Invalid configuration: {e}") from e
        if self.log_level.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ConfigError(f"Invalid log level '{self.log_level}'")

    def interaction_config(self, lam: float | None = None) -> InteractionConfig:
        return InteractionConfig(
            horizon=int(self.horizon),
            lam=float(self.lam if lam is None else lam),
            tau=float(self.tau),
            s_init=int(self.s_init),
        )

    def design_config(self) -> DesignConfig:
        return DesignConfig(
            topology=self.topology,
            learn=self.learn,
            init=self.init,
            prior=prior_from_name(self.prior),
            interaction=self.interaction_config(),
            gamma=float(self.gamma),
            unroll=int(self.unroll),
            batch_size=int(self.batch_size),
            steps=int(self.steps),
            learning_rate=float(self.learning_rate),
            hidden_size=int(self.hidden_size),
            reward_l2=float(self.reward_l2),
            weight_decay=float(self.weight_decay),
            eval_batch=int(self.eval_batch),
            refit_steps=int(self.refit_steps),
            refit_learning_rate=float(self.refit_learning_rate),
            straight_through=bool(self.straight_through),
            log_every=int(self.log_every),
            seed=int(self.seed),
        )

    def eval_settings(self) -> EvalSettings:
        return EvalSettings(
            sizes=tuple(int(s) for s in self.eval_sizes),  # type: ignore[arg-type]
            epochs=int(self.eval_epochs),
            seeds=tuple(int(s) for s in self.eval_seeds),
            batch_size=int(self.eval_batch_size),
            learning_rate=float(self.eval_learning_rate),
            hidden_size=int(self.hidden_size),
            regenerate_per_round=bool(self.regenerate_per_round),
            dataset_seed=int(self.dataset_seed),
            workers=self.resolve_workers(),
        )

    def mixture(self) -> GaussianMixture:
        return GaussianMixture(
            means=tuple(tuple(float(x) for x in m) for m in self.mixture_means),  # type: ignore[misc]
            covariance=float(self.mixture_covariance),
        )

    def resolve_workers(self) -> int:
        """Configured worker count, or the number of physical cores when 0."""
        if self.workers > 0:
            return int(self.workers)
        return psutil.cpu_count(logical=False) or psutil.cpu_count() or 1

    def to_dict(self) -> dict[str, Any]:
        """Convert config to dictionary."""
        nested: dict[str, dict[str, Any]] = {}
        for (section, key), attr in NESTED_TO_FLAT.items():
            nested.setdefault(section, {})[key] = getattr(self, attr)
        return nested

    def save(self, path: str | Path) -> None:
        """Save configuration to a YAML file."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)

        with open(path, "w") as f:
            yaml.dump(self.to_dict(), f, default_flow_style=False, sort_keys=False)


SAMPLE_CONFIG = """# probe-core configuration
# Values shown are the built-in defaults.

# Game family to design
game:
  # path:1x6 or grid:3x6 (any RxC works for grids)
  topology: grid:3x6

  # What the designer may change: none, reward, reward+transition
  learn: reward+transition

  # Starting parameters: random (small Gaussian rewards) or baseline
  init: random

  # Discount factor of the players' planner
  gamma: 0.95

# How players act
interaction:
  horizon: 15
  # Action noise; 1 samples the softmax policy exactly
  lambda: 1.0
  # Relaxation temperature used while designing
  tau: 1.0
  # Start state, numbered from 1
  s_init: 1

# Design training
design:
  # Player prior: full or diagonal
  prior: full
  unroll: 50
  batch_size: 64
  steps: 5000
  learning_rate: 0.001
  reward_l2: 0.0
  weight_decay: 0.0
  log_every: 250
  eval_batch: 1024
  # Posterior-only fitting on hard play before the held-out loss
  refit_steps: 200
  refit_learning_rate: 0.01
  # One-hot samples in the forward pass instead of soft ones
  straight_through: false

posterior:
  hidden_size: 32

# Downstream classification
evaluation:
  sizes: [1000, 100, 100]
  epochs: 20
  seeds: [0, 1, 2, 3, 4]
  batch_size: 32
  learning_rate: 0.001
  lambdas: [1.0, 1.5, 2.5]
  # Draw a fresh dataset for every seed instead of sharing one
  regenerate_per_round: false
  dataset_seed: 1234
  mixture_means: [[1.0, 1.0], [1.2, 0.7], [0.7, 1.2]]
  mixture_covariance: 0.1

output:
  # Overridden by PROBE_OUTPUT_DIR
  dir: probe-output

logging:
  # Log level: DEBUG, INFO, WARNING, ERROR
  level: INFO
  # Log file path (null = console only)
  file: null

run:
  seed: 0
  # Worker threads for reproduce/evaluate fan-out (0 = physical cores)
  workers: 0
"""


class ConfigError(Exception):
    """Raised for unknown keys or invalid configuration values."""

    pass

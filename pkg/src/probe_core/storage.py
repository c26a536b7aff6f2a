"""
Persistence formats: design checkpoints, datasets, reports and loss curves.

Everything is written as text. Checkpoints and reports are JSON documents with a
schema version; datasets are JSON Lines with one record per trajectory. Keys are
sorted and floats use their shortest round-trip form, so identical inputs produce
byte-identical files.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from probe_core.designer import DesignConfig, DesignReport
from probe_core.evalharness import SPLITS, Dataset, Split
from probe_core.gamespace import GameParams, GameTopology, Mdp, TopologyError, realize_mdp
from probe_core.interaction import TrajectoryBatch
from probe_core.posterior import PosteriorNet

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
DATASET_VERSION = 1

_CHECKPOINT_KEYS = ("version", "topology", "gamma", "reward", "stick_logit", "posterior", "loss_curve")


def _dumps(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write(text)


@dataclass
class Checkpoint:
    """A loaded design checkpoint."""

    topology: GameTopology
    gamma: float
    params: GameParams
    posterior: PosteriorNet | None
    loss_curve: list[float]
    final_loss: float | None
    config: dict[str, Any]

    @property
    def learn_transition(self) -> bool:
        return self.params.stick_logit is not None

    def game(self) -> Mdp:
        return realize_mdp(self.topology, self.params, self.learn_transition, self.gamma).frozen()

    def design_config(self) -> DesignConfig | None:
        return DesignConfig.from_dict(self.config) if self.config else None


def checkpoint_dict(report: DesignReport) -> dict[str, Any]:
    params = report.params.to_dict()
    return {
        "version": CHECKPOINT_VERSION,
        "topology": report.topology.to_dict(),
        "gamma": report.config.gamma,
        "reward": params["reward"],
        "stick_logit": params["stick_logit"],
        "posterior": report.posterior.to_dict(),
        "config": report.config.to_dict(),
        "loss_curve": report.loss_curve,
        "final_loss": report.final_loss,
        "entropy_constant": report.entropy_constant,
    }


def save_checkpoint(report: DesignReport, path: str | Path) -> Path:
    """Write a design checkpoint as JSON."""
    path = Path(path)
    _write(path, _dumps(checkpoint_dict(report)))
    logger.debug(f"Checkpoint written to {path}")
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    """
    Read and validate a design checkpoint.

    Raises:
        CheckpointError: If the file is not valid JSON, has the wrong version, or its
            arrays do not match the declared topology.
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint not found: {path}", path=path)
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"Checkpoint is not valid JSON: {e}", path=path) from e

    if not isinstance(data, dict):
        raise CheckpointError("Checkpoint must be a JSON object", path=path)
    missing = [k for k in _CHECKPOINT_KEYS if k not in data]
    if missing:
        raise CheckpointError(f"Checkpoint is missing keys: {', '.join(missing)}", path=path)
    if data["version"] != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"Unsupported checkpoint version {data['version']} (expected {CHECKPOINT_VERSION})",
            path=path,
        )

    try:
        topology = GameTopology.from_dict(data["topology"])
    except (TopologyError, KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"Invalid topology: {e}", path=path) from e

    reward = np.asarray(data["reward"], dtype=np.float64)
    if reward.shape != (topology.n_states,):
        raise CheckpointError(
            f"Expected {topology.n_states} rewards, found shape {reward.shape}", path=path
        )
    stick = data["stick_logit"]
    if stick is not None:
        stick = np.asarray(stick, dtype=np.float64)
        if stick.shape != (topology.n_states,):
            raise CheckpointError(
                f"Expected {topology.n_states} stickiness logits, found shape {stick.shape}",
                path=path,
            )
    gamma = float(data["gamma"])
    if not 0.0 < gamma < 1.0:
        raise CheckpointError(f"Discount must lie in (0, 1), found {gamma}", path=path)

    posterior = None
    if data["posterior"] is not None:
        try:
            posterior = PosteriorNet.from_dict(data["posterior"])
        except (KeyError, ValueError) as e:
            raise CheckpointError(f"Invalid posterior parameters: {e}", path=path) from e

    return Checkpoint(
        topology=topology,
        gamma=gamma,
        params=GameParams.from_arrays(reward, stick, trainable=False),
        posterior=posterior,
        loss_curve=[float(x) for x in data["loss_curve"]],
        final_loss=data.get("final_loss"),
        config=data.get("config") or {},
    )


def save_loss_curve(curve: list[float], path: str | Path) -> Path:
    """Write `step,loss` rows, one per design step starting at 1."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "loss"])
        for step, loss in enumerate(curve, start=1):
            writer.writerow([step, repr(float(loss))])
    return path


def load_loss_curve(path: str | Path) -> list[float]:
    with open(path, newline="") as f:
        return [float(row["loss"]) for row in csv.DictReader(f)]


def save_dataset(dataset: Dataset, path: str | Path) -> Path:
    """
    Write a dataset as JSON Lines.

    The first line is a header record; each following line is one trajectory
    {split, label, states, actions} with 0-based indices.
    """
    path = Path(path)
    header = {
        "kind": "header",
        "version": DATASET_VERSION,
        "topology": dataset.game.topology.to_dict(),
        "lambda": dataset.lam,
        "seed": dataset.seed,
        "mixture": dataset.mixture.to_dict(),
        "sizes": list(dataset.sizes),
    }
    lines = [json.dumps(header, sort_keys=True)]
    for name in SPLITS:
        split = dataset.split(name)
        for i in range(len(split)):
            lines.append(
                json.dumps(
                    {
                        "split": name,
                        "label": int(split.labels[i]),
                        "states": split.trajectories.states[i].tolist(),
                        "actions": split.trajectories.actions[i].tolist(),
                    },
                    sort_keys=True,
                )
            )
    _write(path, "\n".join(lines) + "\n")
    logger.debug(f"Dataset with {sum(dataset.sizes)} records written to {path}")
    return path


def load_dataset(path: str | Path) -> tuple[dict[str, Any], dict[str, Split]]:
    """Read a JSON Lines dataset; returns its header and the three splits."""
    path = Path(path)
    records: dict[str, list[dict[str, Any]]] = {name: [] for name in SPLITS}
    header: dict[str, Any] | None = None
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise CheckpointError(f"Line {lineno} is not valid JSON: {e}", path=path) from e
            if record.get("kind") == "header":
                header = record
                continue
            if record.get("split") not in records:
                raise CheckpointError(f"Line {lineno} has an unknown split", path=path)
            records[record["split"]].append(record)
    if header is None:
        raise CheckpointError("Dataset header is missing", path=path)
    if header.get("version") != DATASET_VERSION:
        raise CheckpointError(f"Unsupported dataset version {header.get('version')}", path=path)

    splits = {}
    for name, rows in records.items():
        if rows:
            batch = TrajectoryBatch(
                states=np.array([r["states"] for r in rows], dtype=np.int64),
                actions=np.array([r["actions"] for r in rows], dtype=np.int64),
            )
        else:
            empty = np.zeros((0, 0), dtype=np.int64)
            batch = TrajectoryBatch(empty, empty.copy())
        splits[name] = Split(batch, np.array([r["label"] for r in rows], dtype=np.int64))
    return header, splits


def save_report(data: dict[str, Any], path: str | Path) -> Path:
    """Write an evaluation or reproduction report as versioned JSON."""
    path = Path(path)
    _write(path, _dumps({"version": CHECKPOINT_VERSION, **data}))
    return path


class CheckpointError(Exception):
    """Raised when a stored artifact violates its schema."""

    def __init__(self, message: str, path: str | Path | None = None):
        super().__init__(message)
        self.path = path

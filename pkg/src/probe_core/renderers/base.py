"""
Base renderer class that all renderers inherit from.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

from matplotlib.figure import Figure  # noqa: E402

from probe_core.gamespace import Mdp  # noqa: E402
from probe_core.interaction import InteractionConfig  # noqa: E402
from probe_core.players import PLAYER_TYPES, PlayerTrait  # noqa: E402

logger = logging.getLogger(__name__)

# Fixed salt and no date stamp keep SVG output byte-identical across runs
SVG_HASHSALT = "probe-core"


@dataclass
class RenderTarget:
    """A game plus the players and sampling settings a figure needs."""

    game: Mdp
    traits: dict[str, PlayerTrait] = field(default_factory=lambda: dict(PLAYER_TYPES))
    interaction: InteractionConfig = field(default_factory=InteractionConfig)
    rollouts: int = 5
    seed: int = 0
    title: str = ""


class BaseRenderer(ABC):
    """
    Abstract base class for all renderers.

    Subclasses implement `figure` (vector output) and `text` (plain-text fallback).
    """

    name: str = "base"
    description: str = "Base renderer"

    def __init__(self) -> None:
        self.logger = logging.getLogger(f"{__name__}.{self.name}")

    @abstractmethod
    def figure(self, target: RenderTarget) -> Figure:
        """Draw the figure for `target`."""
        pass

    @abstractmethod
    def text(self, target: RenderTarget) -> str:
        """Plain-text rendering of the same content."""
        pass

    def render(
        self, target: RenderTarget, out_dir: str | Path, stem: str | None = None
    ) -> list[Path]:
        """
        Write `<stem>.svg` and `<stem>.txt` into `out_dir`.

        Returns:
            Paths of the files written.
        """
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = stem or self.name
        svg_path = out_dir / f"{stem}.svg"
        txt_path = out_dir / f"{stem}.txt"

        fig = self.figure(target)
        with matplotlib.rc_context({"svg.hashsalt": SVG_HASHSALT, "svg.fonttype": "none"}):
            fig.savefig(svg_path, format="svg", metadata={"Date": None})
        txt_path.write_text(self.text(target))
        self.logger.debug(f"Rendered {self.name} to {svg_path} and {txt_path}")
        return [svg_path, txt_path]


def grid_layout(target: RenderTarget, values: list[float]) -> list[list[float]]:
    """Arrange per-state values as rows, top row first, matching the board picture."""
    topology = target.game.topology
    rows = [values[r * topology.cols : (r + 1) * topology.cols] for r in range(topology.rows)]
    return rows[::-1]


def format_row(values: list[float], width: int = 7, digits: int = 2) -> str:
    return " ".join(f"{v:>{width}.{digits}f}" for v in values)

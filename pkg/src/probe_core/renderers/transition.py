"""
Stickiness heatmap: probability that moveRight leaves the player where it is.
"""

from __future__ import annotations

import numpy as np
from matplotlib.figure import Figure

from probe_core.gamespace import MOVE_RIGHT
from probe_core.renderers.base import BaseRenderer, RenderTarget, format_row, grid_layout


def stickiness(target: RenderTarget) -> np.ndarray:
    """Per-state stay probability of moveRight; NaN in the rightmost column (always stays)."""
    topology = target.game.topology
    if MOVE_RIGHT not in topology.actions:
        return np.full(topology.n_states, np.nan)
    action = topology.actions.index(MOVE_RIGHT)
    alpha = np.diagonal(target.game.T[:, action, :]).copy()
    edge = np.arange(topology.n_states) % topology.cols == topology.cols - 1
    alpha[edge] = np.nan
    return alpha


class TransitionRenderer(BaseRenderer):
    """Renders learned moveRight stickiness per state."""

    name = "transition"
    description = "Per-state stickiness heatmap of moveRight"

    def figure(self, target: RenderTarget) -> Figure:
        topology = target.game.topology
        board = np.array(grid_layout(target, stickiness(target).tolist()))

        fig = Figure(figsize=(1.0 + 0.9 * topology.cols, 0.8 + 0.9 * topology.rows))
        ax = fig.add_subplot()
        image = ax.imshow(np.ma.masked_invalid(board), cmap="Greys", vmin=0.0, vmax=1.0)
        for r in range(topology.rows):
            for c in range(topology.cols):
                label = "edge" if np.isnan(board[r, c]) else f"{board[r, c]:.2f}"
                ax.text(c, r, label, ha="center", va="center", fontsize=7, color="tab:red")
        ax.set_xticks([])
        ax.set_yticks([])
        ax.set_title(target.title or f"Stickiness of moveRight ({topology.spec})")
        fig.colorbar(image, ax=ax, shrink=0.8)
        return fig

    def text(self, target: RenderTarget) -> str:
        topology = target.game.topology
        lines = [f"moveRight stickiness {topology.spec} (top row first, nan = edge)"]
        for row in grid_layout(target, stickiness(target).tolist()):
            lines.append(format_row(row))
        return "\n".join(lines) + "\n"

"""
Reward heatmap: the objective reward of every state, laid out like the board.
"""

from __future__ import annotations

import numpy as np
from matplotlib.figure import Figure

from probe_core.renderers.base import BaseRenderer, RenderTarget, format_row, grid_layout


class RewardRenderer(BaseRenderer):
    """Renders per-state rewards."""

    name = "reward"
    description = "Per-state reward heatmap"

    def figure(self, target: RenderTarget) -> Figure:
        topology = target.game.topology
        board = np.array(grid_layout(target, target.game.R.tolist()))
        limit = max(float(np.abs(board).max()), 1e-9)

        fig = Figure(figsize=(1.0 + 0.9 * topology.cols, 0.8 + 0.9 * topology.rows))
        ax = fig.add_subplot()
        image = ax.imshow(board, cmap="RdBu", vmin=-limit, vmax=limit)
        for r in range(topology.rows):
            for c in range(topology.cols):
                state = (topology.rows - 1 - r) * topology.cols + c + 1
                ax.text(c, r, f"{board[r, c]:.2f}\ns{state}", ha="center", va="center", fontsize=7)
        ax.set_xticks([])
        ax.set_yticks([])
        ax.set_title(target.title or f"Reward ({topology.spec})")
        fig.colorbar(image, ax=ax, shrink=0.8)
        return fig

    def text(self, target: RenderTarget) -> str:
        topology = target.game.topology
        lines = [f"reward {topology.spec} (top row first)"]
        for row in grid_layout(target, target.game.R.tolist()):
            lines.append(format_row(row))
        return "\n".join(lines) + "\n"

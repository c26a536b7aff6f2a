"""
Policy heatmaps: action probabilities per state for each player trait.
"""

from __future__ import annotations

import numpy as np
from matplotlib.figure import Figure

from probe_core.planner import inference_policy
from probe_core.players import TraitBatch
from probe_core.renderers.base import BaseRenderer, RenderTarget


def policies(target: RenderTarget) -> dict[str, np.ndarray]:
    """Converged (S, A) policy for every named trait."""
    batch = TraitBatch.from_traits(list(target.traits.values()))
    arrays = inference_policy(target.game, batch).array
    return dict(zip(target.traits, arrays))


class PolicyRenderer(BaseRenderer):
    """Renders one state-by-action probability table per trait."""

    name = "policy"
    description = "Per-trait policy heatmaps"

    def figure(self, target: RenderTarget) -> Figure:
        topology = target.game.topology
        tables = policies(target)
        fig = Figure(figsize=(2.2 * len(tables) + 0.5, 0.6 + 0.3 * topology.n_states))
        axes = fig.subplots(1, len(tables), squeeze=False)[0]
        for ax, (label, table) in zip(axes, tables.items()):
            ax.imshow(table, cmap="viridis", vmin=0.0, vmax=1.0, aspect="auto")
            for s in range(topology.n_states):
                for a in range(topology.n_actions):
                    color = "white" if table[s, a] < 0.5 else "black"
                    ax.text(
                        a, s, f"{table[s, a]:.2f}",
                        ha="center", va="center", fontsize=6, color=color,
                    )
            ax.set_xticks(range(topology.n_actions))
            ax.set_xticklabels(topology.actions, fontsize=7)
            ax.set_yticks(range(topology.n_states))
            ax.set_yticklabels([f"s{s + 1}" for s in range(topology.n_states)], fontsize=6)
            ax.set_title(label, fontsize=9)
        fig.suptitle(target.title or f"Policies ({topology.spec})")
        return fig

    def text(self, target: RenderTarget) -> str:
        topology = target.game.topology
        lines = []
        for label, table in policies(target).items():
            lines.append(f"policy of {label} on {topology.spec}")
            lines.append("state  " + " ".join(f"{a:>9}" for a in topology.actions) + "      sum")
            for s, row in enumerate(table):
                cells = " ".join(f"{p:>9.3f}" for p in row)
                lines.append(f"s{s + 1:<5} {cells} {row.sum():>8.3f}")
            lines.append("")
        return "\n".join(lines)

"""
Trajectory rasters: visited state over time for sampled rollouts of each trait.
"""

from __future__ import annotations

import numpy as np
from matplotlib.figure import Figure

from probe_core.interaction import TrajectoryBatch, sample_trajectories_hard
from probe_core.renderers.base import BaseRenderer, RenderTarget
from probe_core.renderers.policy import policies


def rollouts(target: RenderTarget) -> dict[str, TrajectoryBatch]:
    """`target.rollouts` hard trajectories per trait, each trait on its own seed stream."""
    samples = {}
    for i, (label, policy) in enumerate(policies(target).items()):
        stacked = np.repeat(policy[None], target.rollouts, axis=0)
        samples[label] = sample_trajectories_hard(
            target.game, stacked, target.interaction, target.seed * 1000 + i
        )
    return samples


class TrajectoriesRenderer(BaseRenderer):
    """Renders one labeled raster of state against time per trait."""

    name = "trajectories"
    description = "State-versus-time rasters of sampled rollouts per trait"

    def figure(self, target: RenderTarget) -> Figure:
        topology = target.game.topology
        samples = rollouts(target)
        fig = Figure(figsize=(3.0 * len(samples) + 0.5, 3.0))
        axes = fig.subplots(1, len(samples), squeeze=False, sharey=True)[0]
        for ax, (label, batch) in zip(axes, samples.items()):
            steps = np.arange(batch.horizon)
            for k in range(len(batch)):
                ax.step(steps, batch.states[k] + 1, where="post", alpha=0.6, linewidth=1.2)
            ax.set_title(label, fontsize=9)
            ax.set_xlabel("t")
            ax.set_ylim(0.5, topology.n_states + 0.5)
        axes[0].set_ylabel("state")
        fig.suptitle(target.title or f"Trajectories ({topology.spec})")
        return fig

    def text(self, target: RenderTarget) -> str:
        lines = []
        for label, batch in rollouts(target).items():
            lines.append(f"{label}:")
            for k in range(len(batch)):
                lines.append("  " + " ".join(f"{s + 1:>2}" for s in batch.states[k]))
        return "\n".join(lines) + "\n"

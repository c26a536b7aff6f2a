"""
Renderers for designed games.

Each renderer writes a vector figure plus a plain-text fallback. Renderers follow a
plugin architecture and are looked up by name.
"""

from __future__ import annotations

from probe_core.renderers.base import BaseRenderer, RenderTarget
from probe_core.renderers.policy import PolicyRenderer
from probe_core.renderers.reward import RewardRenderer
from probe_core.renderers.trajectories import TrajectoriesRenderer
from probe_core.renderers.transition import TransitionRenderer

# Registry of all available renderers
RENDERERS: dict[str, type[BaseRenderer]] = {
    "reward": RewardRenderer,
    "transition": TransitionRenderer,
    "policy": PolicyRenderer,
    "trajectories": TrajectoriesRenderer,
}


def get_all_renderers() -> dict[str, type[BaseRenderer]]:
    """Return all registered renderers."""
    return RENDERERS.copy()


def get_renderer(name: str) -> type[BaseRenderer] | None:
    """Get a specific renderer by name."""
    return RENDERERS.get(name)


def list_renderers() -> list[str]:
    """List all available renderer names."""
    return list(RENDERERS.keys())


__all__ = [
    "BaseRenderer",
    "RenderTarget",
    "RewardRenderer",
    "TransitionRenderer",
    "PolicyRenderer",
    "TrajectoriesRenderer",
    "RENDERERS",
    "get_all_renderers",
    "get_renderer",
    "list_renderers",
]

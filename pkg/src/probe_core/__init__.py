"""
probe-core - Behavior-diagnostic game design.

Learns the rewards and transitions of small grid games so that the way a player
moves through them reveals how that player perceives gains and losses.
"""

__version__ = "0.1.0"
__author__ = "Sluggisty"

# Import main modules to make them available as package attributes
from . import cli, config, core, designer, evalharness, storage

__all__ = ["__version__", "cli", "config", "core", "designer", "evalharness", "storage"]

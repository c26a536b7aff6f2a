"""
Pytest configuration for probe-core tests.

Configures pytest with custom markers and shared fixtures for small, fast games.
"""

from __future__ import annotations

import numpy as np
import pytest

from probe_core import diffcore as dc
from probe_core.config import Config
from probe_core.designer import DesignConfig
from probe_core.gamespace import baseline_game
from probe_core.interaction import InteractionConfig


def pytest_configure(config):
    """Configure pytest with custom markers."""
    config.addinivalue_line(
        "markers", "slow: marks tests as slow (deselect with '-m \"not slow\"')"
    )
    config.addinivalue_line("markers", "integration: marks tests as integration tests")
    config.addinivalue_line("markers", "cli: marks tests as CLI tests")
    config.addinivalue_line("markers", "e2e: marks tests as end-to-end tests")
    config.addinivalue_line("markers", "performance: marks tests as performance tests")
    config.addinivalue_line(
        "markers", "statistical: marks sampling-distribution tests (chi-square, KS)"
    )


TINY_SETTINGS = {
    "topology": "path:1x6",
    "steps": 3,
    "batch_size": 4,
    "unroll": 5,
    "horizon": 4,
    "eval_batch": 8,
    "refit_steps": 2,
    "hidden_size": 4,
    "log_every": 0,
    "eval_sizes": [30, 10, 10],
    "eval_epochs": 2,
    "eval_seeds": [0, 1],
    "eval_batch_size": 8,
    "workers": 1,
}


@pytest.fixture
def tiny_config(tmp_path) -> Config:
    """A Config small enough that design and evaluation take well under a second."""
    return Config(output_dir=str(tmp_path / "out"), **TINY_SETTINGS)  # type: ignore[arg-type]


@pytest.fixture
def tiny_design() -> DesignConfig:
    """DesignConfig for a three-step run on the 1x6 path."""
    return DesignConfig(
        topology="path:1x6",
        learn="reward+transition",
        interaction=InteractionConfig(horizon=4),
        unroll=5,
        batch_size=4,
        steps=3,
        hidden_size=4,
        eval_batch=8,
        refit_steps=2,
        log_every=0,
        seed=0,
    )


@pytest.fixture
def path_game():
    return baseline_game("path:1x6")


@pytest.fixture
def grid_game():
    return baseline_game("grid:3x6")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


def _numeric_gradient(expr: dc.Node, leaf: dc.Node, step: float = 1e-5) -> np.ndarray:
    flat = leaf.value.reshape(-1)
    grad = np.zeros(flat.size)
    try:
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            upper = float(dc.evaluate(expr).reshape(-1)[0])
            flat[i] = original - step
            lower = float(dc.evaluate(expr).reshape(-1)[0])
            flat[i] = original
            grad[i] = (upper - lower) / (2.0 * step)
    finally:
        dc.evaluate(expr)
    return grad.reshape(leaf.shape)


@pytest.fixture
def numeric_gradient():
    """Central finite differences of a scalar expression with respect to one leaf."""
    return _numeric_gradient

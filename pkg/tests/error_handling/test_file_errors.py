"""
Error handling tests for stored artifacts.

Tests that damaged checkpoints and datasets fail with CheckpointError (or the
underlying OSError) and that the CLI maps them to the I/O exit code.
"""

from __future__ import annotations

import json
import shutil
import tempfile
import unittest
from pathlib import Path

import pytest
from click.testing import CliRunner

from probe_core.cli import main
from probe_core.designer import DesignConfig, design_game
from probe_core.evalharness import generate_dataset
from probe_core.gamespace import baseline_game
from probe_core.interaction import InteractionConfig
from probe_core.players import GaussianMixture
from probe_core.storage import (
    CheckpointError,
    load_checkpoint,
    load_dataset,
    save_checkpoint,
    save_dataset,
)


@pytest.mark.integration
class TestCheckpointFileErrors(unittest.TestCase):
    """Test checkpoint read errors."""

    @classmethod
    def setUpClass(cls):
        config = DesignConfig(
            topology="path:1x6",
            interaction=InteractionConfig(horizon=4),
            unroll=5,
            batch_size=4,
            steps=1,
            hidden_size=4,
            eval_batch=8,
            refit_steps=2,
            log_every=0,
        )
        cls.report = design_game(config)

    def setUp(self):
        self.temp_dir = Path(tempfile.mkdtemp())
        self.checkpoint = save_checkpoint(self.report, self.temp_dir / "design.json")

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_truncated_file(self):
        text = self.checkpoint.read_text()
        self.checkpoint.write_text(text[: len(text) // 2])

        with self.assertRaisesRegex(CheckpointError, "not valid JSON"):
            load_checkpoint(self.checkpoint)

    def test_empty_file(self):
        self.checkpoint.write_text("")

        with self.assertRaises(CheckpointError):
            load_checkpoint(self.checkpoint)

    def test_error_carries_path(self):
        self.checkpoint.write_text("[]")

        with self.assertRaises(CheckpointError) as ctx:
            load_checkpoint(self.checkpoint)

        self.assertEqual(ctx.exception.path, self.checkpoint)

    def test_directory_instead_of_file(self):
        with self.assertRaises(OSError):
            load_checkpoint(self.temp_dir)

    def test_future_version(self):
        data = json.loads(self.checkpoint.read_text())
        data["version"] = 2
        self.checkpoint.write_text(json.dumps(data))

        with self.assertRaisesRegex(CheckpointError, "Unsupported checkpoint version"):
            load_checkpoint(self.checkpoint)

    def test_extra_keys_are_ignored(self):
        data = json.loads(self.checkpoint.read_text())
        data["notes"] = "hand edited"
        self.checkpoint.write_text(json.dumps(data))

        loaded = load_checkpoint(self.checkpoint)

        self.assertEqual(loaded.loss_curve, self.report.loss_curve)

    def test_cli_reports_damaged_checkpoint(self):
        """A damaged checkpoint exits with the I/O code instead of a traceback."""
        self.checkpoint.write_text("{")
        result = CliRunner().invoke(main, ["render", str(self.checkpoint), "reward"])

        self.assertEqual(result.exit_code, 4)
        self.assertIn("not valid JSON", result.output)


@pytest.mark.integration
class TestDatasetFileErrors(unittest.TestCase):
    """Test dataset read errors."""

    def setUp(self):
        self.temp_dir = Path(tempfile.mkdtemp())
        dataset = generate_dataset(
            baseline_game("path:1x6"), GaussianMixture(), (6, 3, 3), InteractionConfig(horizon=4), 0
        )
        self.dataset_file = save_dataset(dataset, self.temp_dir / "dataset.jsonl")

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            load_dataset(self.temp_dir / "absent.jsonl")

    def test_empty_file(self):
        self.dataset_file.write_text("")

        with self.assertRaisesRegex(CheckpointError, "header is missing"):
            load_dataset(self.dataset_file)

    def test_truncated_last_line(self):
        text = self.dataset_file.read_text().rstrip("\n")
        self.dataset_file.write_text(text[:-5] + "\n")

        with self.assertRaisesRegex(CheckpointError, "Line 13"):
            load_dataset(self.dataset_file)

    def test_blank_lines_are_skipped(self):
        lines = self.dataset_file.read_text().splitlines()
        self.dataset_file.write_text("\n\n".join(lines) + "\n")

        _, splits = load_dataset(self.dataset_file)

        self.assertEqual([len(splits[name]) for name in ("train", "val", "test")], [6, 3, 3])

    def test_wrong_dataset_version(self):
        lines = self.dataset_file.read_text().splitlines()
        header = json.loads(lines[0])
        header["version"] = 99
        self.dataset_file.write_text("\n".join([json.dumps(header), *lines[1:]]) + "\n")

        with self.assertRaisesRegex(CheckpointError, "Unsupported dataset version"):
            load_dataset(self.dataset_file)

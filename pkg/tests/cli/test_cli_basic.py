"""
Basic CLI tests for probe-core.

Tests help, version, command structure and exit codes.
"""

from __future__ import annotations

import shutil
import sys
import tempfile
import unittest
from pathlib import Path

import pytest
import yaml
from click.testing import CliRunner

from probe_core.config import SAMPLE_CONFIG, Config
from tests.conftest import TINY_SETTINGS


@pytest.mark.cli
class TestCliBasic(unittest.TestCase):
    """Test basic CLI functionality."""

    def setUp(self):
        """Set up test runner."""
        self.runner = CliRunner()
        # Completely fresh import to avoid any module state issues
        if "probe_core.cli" in sys.modules:
            del sys.modules["probe_core.cli"]
        import probe_core.cli

        self.main = probe_core.cli.main

    def test_cli_help(self):
        """Test that --help displays help information."""
        result = self.runner.invoke(self.main, ["--help"])

        self.assertEqual(result.exit_code, 0)
        self.assertIn("probe-core", result.output)
        self.assertIn("--config", result.output)
        self.assertIn("--verbose", result.output)
        for command in ("design", "evaluate", "render", "reproduce", "simulate", "list"):
            self.assertIn(command, result.output)

    def test_cli_version(self):
        """Test that --version displays version information."""
        result = self.runner.invoke(self.main, ["--version"])

        self.assertEqual(result.exit_code, 0)
        self.assertIn("probe-core", result.output)
        self.assertRegex(result.output, r"\d+\.\d+\.\d+")

    def test_version_command(self):
        result = self.runner.invoke(self.main, ["version"])

        self.assertEqual(result.exit_code, 0)
        self.assertIn("NumPy", result.output)

    def test_cli_no_args_shows_help(self):
        """Test that running without args shows help."""
        result = self.runner.invoke(self.main, [])

        self.assertEqual(result.exit_code, 0)
        self.assertIn("Usage", result.output)

    def test_cli_invalid_command(self):
        """Test that invalid commands show error."""
        result = self.runner.invoke(self.main, ["invalid-command"])

        self.assertEqual(result.exit_code, 2)
        self.assertIn("No such command", result.output)

    def test_cli_verbose_flag(self):
        """Test that --verbose flag is accepted."""
        result = self.runner.invoke(self.main, ["--verbose", "list"])

        self.assertEqual(result.exit_code, 0)

    def test_cli_config_flag_with_invalid_path(self):
        """Test that --config with invalid path shows error."""
        result = self.runner.invoke(self.main, ["--config", "/nonexistent/config.yaml", "list"])

        self.assertEqual(result.exit_code, 2)

    def test_reproduce_rejects_unknown_table(self):
        result = self.runner.invoke(self.main, ["reproduce", "5"])

        self.assertEqual(result.exit_code, 2)

    def test_render_rejects_unknown_target(self):
        result = self.runner.invoke(self.main, ["render", "baseline-path", "histogram"])

        self.assertEqual(result.exit_code, 2)


@pytest.mark.cli
class TestCliCommands(unittest.TestCase):
    """Test commands against a tiny configuration."""

    def setUp(self):
        self.runner = CliRunner()
        if "probe_core.cli" in sys.modules:
            del sys.modules["probe_core.cli"]
        import probe_core.cli

        self.main = probe_core.cli.main
        self.temp_dir = Path(tempfile.mkdtemp())
        self.out_dir = self.temp_dir / "out"
        self.config_file = self.temp_dir / "config.yaml"
        Config(output_dir=str(self.out_dir), **TINY_SETTINGS).save(self.config_file)

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def invoke(self, *args: str):
        return self.runner.invoke(self.main, ["-c", str(self.config_file), *args])

    def test_init_config(self):
        """init-config writes the commented sample."""
        target = self.temp_dir / "generated" / "probe.yaml"
        result = self.runner.invoke(self.main, ["init-config", str(target)])

        self.assertEqual(result.exit_code, 0)
        self.assertEqual(target.read_text(), SAMPLE_CONFIG)
        self.assertEqual(Config.from_file(target), Config())

    def test_design_writes_checkpoint_and_curve(self):
        result = self.invoke("design")

        self.assertEqual(result.exit_code, 0, result.output)
        self.assertTrue((self.out_dir / "checkpoint.json").exists())
        curve = (self.out_dir / "loss_curve.csv").read_text().splitlines()
        self.assertEqual(curve[0], "step,loss")
        self.assertEqual(len(curve), 1 + TINY_SETTINGS["steps"])
        self.assertIn("Final loss", result.output)

    def test_design_options_override_config(self):
        custom = self.temp_dir / "custom"
        result = self.invoke("design", "--steps", "2", "--learn", "reward", "--out", str(custom))

        self.assertEqual(result.exit_code, 0, result.output)
        self.assertEqual(len((custom / "loss_curve.csv").read_text().splitlines()), 3)

    def test_bad_lambda_exits_with_config_code(self):
        result = self.invoke("design", "--lambda", "0.5")

        self.assertEqual(result.exit_code, 2)
        self.assertIn("Configuration error", result.output)

    def test_bad_config_file_exits_with_config_code(self):
        self.config_file.write_text(yaml.dump({"game": {"topology": "ring:1x6"}}))
        result = self.invoke("list")

        self.assertEqual(result.exit_code, 2)
        self.assertIn("Configuration error", result.output)

    def test_missing_checkpoint_exits_with_io_code(self):
        result = self.invoke("evaluate", str(self.temp_dir / "absent.json"))

        self.assertEqual(result.exit_code, 4)
        self.assertIn("I/O error", result.output)

    def test_evaluate_builtin_game(self):
        result = self.invoke("evaluate", "baseline-path", "--lambda", "1.5")

        self.assertEqual(result.exit_code, 0, result.output)
        self.assertIn("Accuracy", result.output)
        self.assertTrue((self.out_dir / "eval_baseline-path.json").exists())

    def test_render_one_target(self):
        result = self.invoke("render", "baseline-grid", "reward")

        self.assertEqual(result.exit_code, 0, result.output)
        self.assertTrue((self.out_dir / "reward.svg").exists())
        self.assertTrue((self.out_dir / "reward.txt").exists())

    def test_simulate(self):
        result = self.invoke("simulate", "random-path", "--seed", "3")

        self.assertEqual(result.exit_code, 0, result.output)
        lines = (self.out_dir / "dataset_random-path.jsonl").read_text().splitlines()
        self.assertEqual(len(lines), 1 + sum(TINY_SETTINGS["eval_sizes"]))

    def test_start_state_outside_topology_exits_with_config_code(self):
        self.config_file.write_text(
            yaml.dump({"game": {"topology": "grid:3x6"}, "interaction": {"s_init": 19}})
        )
        result = self.invoke("design")

        self.assertEqual(result.exit_code, 2, result.output)
        self.assertIn("Configuration error", result.output)
        self.assertFalse((self.out_dir / "checkpoint.json").exists())

    def test_start_state_missing_from_evaluated_game(self):
        """A start state valid for the configured grid but not for a built-in path."""
        self.config_file.write_text(
            yaml.dump({"game": {"topology": "grid:3x6"}, "interaction": {"s_init": 10}})
        )
        result = self.invoke("evaluate", "baseline-path")

        self.assertEqual(result.exit_code, 2, result.output)
        self.assertIn("s_init 10", result.output)

    def test_zero_eval_batch_exits_with_config_code(self):
        self.config_file.write_text(yaml.dump({"design": {"eval_batch": 0}}))
        result = self.invoke("design")

        self.assertEqual(result.exit_code, 2)
        self.assertIn("Configuration error", result.output)

    def test_render_named_and_custom_traits(self):
        result = self.invoke(
            "render", "baseline-path", "policy", "-t", "loss-averse", "-t", "cautious=0.8,1.3"
        )

        self.assertEqual(result.exit_code, 0, result.output)
        text = (self.out_dir / "policy.txt").read_text()
        self.assertIn("policy of loss-averse", text)
        self.assertIn("policy of cautious", text)
        self.assertNotIn("gain-seeking", text)

    def test_render_rejects_malformed_trait(self):
        result = self.invoke("render", "baseline-path", "policy", "--traits", "1.0;2.0")

        self.assertEqual(result.exit_code, 2)
        self.assertIn("Cannot read trait", result.output)

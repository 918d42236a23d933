#!/usr/bin/env python3
"""
End-to-end tests for the command line.
"""

import csv
import io
import json
import tempfile
import unittest
from contextlib import redirect_stderr
from pathlib import Path
from unittest.mock import patch

import yaml

import sys
sys.path.append(str(Path(__file__).parent.parent))

from cli import _apply_overrides, create_parser, main
from nodes.config import load_experiment_config
from nodes.rich_output import formatter
from run_store import recent_runs_sync

SMALL = {
    "system": {"num_aps": 4, "num_ues": 2, "rounds": 4, "grad_dim": 3},
    "training": {"samples_per_ue": 5},
    "sweep": {"axis": "bits", "values": [1, 3], "num_drops": 2},
    "privacy": {"bits_range": [1, 4]},
}


class CliTestCase(unittest.TestCase):

    def setUp(self):
        formatter.set_quiet(True)
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        self.config = self.root / "config.yaml"
        self.config.write_text(yaml.safe_dump(SMALL))

    def tearDown(self):
        formatter.set_quiet(False)
        self.tmp.cleanup()

    def run_cli(self, *argv, out="out"):
        stderr = io.StringIO()
        with redirect_stderr(stderr):
            code = main([argv[0], "--config", str(self.config), "--out", str(self.root / out), *argv[1:]])
        return code, stderr.getvalue()

    def read_csv(self, name, out="out"):
        with open(self.root / out / name) as f:
            return list(csv.reader(f))


class TestParser(unittest.TestCase):

    def test_subcommands(self):
        parser = create_parser()
        for command in ("simulate", "optimize-power", "dp-check", "train", "sweep"):
            self.assertEqual(parser.parse_args([command]).command, command)

    def test_invalid_seed(self):
        """A seed outside u64 is a usage error."""
        with redirect_stderr(io.StringIO()), self.assertRaises(SystemExit) as ctx:
            create_parser().parse_args(["simulate", "--seed", "-1"])
        self.assertEqual(ctx.exception.code, 2)

    def test_no_command(self):
        with patch("sys.stdout", new_callable=io.StringIO):
            self.assertEqual(main([]), 2)


class TestCommands(CliTestCase):
    """Each command writes its files and exits 0."""

    def test_simulate(self):
        code, _ = self.run_cli("simulate", "--seed", "3")
        self.assertEqual(code, 0)
        out = self.root / "out"
        for name in ("drop.json", "ues.csv", "beta.csv", "resolved_config.yaml"):
            self.assertTrue((out / name).exists(), name)
        drop = json.loads((out / "drop.json").read_text())
        self.assertEqual(drop["status"], "ok")
        self.assertEqual(drop["seed"], 3)
        self.assertEqual(self.read_csv("ues.csv")[0],
                         ["ue", "x_km", "y_km", "power_w", "rate_bps", "served_share", "lambda"])

    def test_simulate_async_writes_schedule(self):
        code, _ = self.run_cli("simulate", "--mode", "async-dac")
        self.assertEqual(code, 0)
        rows = self.read_csv("schedule.csv")
        self.assertEqual(rows[0], ["round", "ue", "category", "staleness", "serving_aps"])
        self.assertEqual(len(rows), 1 + 4 * 2)

    def test_simulate_is_reproducible(self):
        """Same seed, byte-identical result files."""
        self.run_cli("simulate", "--seed", "5", out="a")
        self.run_cli("simulate", "--seed", "5", out="b")
        for name in ("drop.json", "ues.csv", "beta.csv"):
            self.assertEqual((self.root / "a" / name).read_bytes(), (self.root / "b" / name).read_bytes())

    def test_optimize_power(self):
        code, _ = self.run_cli("optimize-power", "--format", "svg")
        self.assertEqual(code, 0)
        payload = json.loads((self.root / "out" / "power.json").read_text())
        self.assertLessEqual(payload["total_time_s"], payload["full_power_time_s"] * (1 + 1e-6))
        self.assertTrue((self.root / "out" / "objective.svg").exists())
        self.assertEqual(self.read_csv("objective.csv")[0], ["round", "iteration", "total_time_s"])

    def test_dp_check(self):
        code, _ = self.run_cli("dp-check", "--epsilon", "50", "--delta", "0.1", "--monte-carlo", "10000")
        self.assertEqual(code, 0)
        payload = json.loads((self.root / "out" / "dp.json").read_text())
        self.assertEqual(payload["epsilon"], 50.0)
        self.assertIsNotNone(payload["monte_carlo"])
        self.assertEqual(len(self.read_csv("dp.csv")), 1 + 4)

    def test_train(self):
        code, _ = self.run_cli("train", "--rounds", "3", "--format", "svg")
        self.assertEqual(code, 0)
        rows = self.read_csv("trace.csv")
        self.assertEqual(rows[0], ["round", "loss", "gap", "bound", "lambda", "served_count", "energy_j"])
        self.assertEqual(len(rows), 1 + 4)
        self.assertTrue((self.root / "out" / "trace.svg").exists())

    def test_train_mode_selects_chain(self):
        """--mode sets the training chain and schedule."""
        parser = create_parser()
        expected = {"sync-adc": ("adc", False), "sync-dac": ("dac", False), "async-dac": ("dac", True)}
        for mode, (chain, asynchronous) in expected.items():
            args = parser.parse_args(["train", "--config", str(self.config), "--mode", mode])
            config = _apply_overrides(load_experiment_config(args.config), args)
            self.assertEqual(config.training.chain, chain)
            self.assertEqual(config.training.asynchronous, asynchronous)
            self.assertEqual(config.sweep.mode, mode)

        self.assertEqual(self.run_cli("train", "--mode", "sync-adc", out="adc")[0], 0)
        self.assertEqual(self.run_cli("train", "--mode", "async-dac", out="dac")[0], 0)
        adc = (self.root / "adc" / "trace.csv").read_bytes()
        dac = (self.root / "dac" / "trace.csv").read_bytes()
        self.assertNotEqual(adc, dac)

    def test_sweep_with_store(self):
        """The sweep writes its tables and records the run."""
        store = self.root / "runs.db"
        code, _ = self.run_cli("sweep", "--store", str(store), "--workers", "1")
        self.assertEqual(code, 0)
        self.assertEqual(len(self.read_csv("sweep_drops.csv")), 1 + 4)
        self.assertEqual(len(self.read_csv("sweep_summary.csv")), 1 + 2)
        runs = recent_runs_sync(store)
        self.assertEqual(runs[0]["command"], "sweep")
        self.assertEqual(runs[0]["summary"]["drops"], 4)


class TestErrors(CliTestCase):
    """Failures exit non-zero with a JSON error on stderr."""

    def test_missing_config(self):
        stderr = io.StringIO()
        with redirect_stderr(stderr):
            code = main(["simulate", "--config", str(self.root / "missing.yaml"), "--out", str(self.root)])
        self.assertEqual(code, 1)
        self.assertEqual(json.loads(stderr.getvalue())["error"], "invalid-config")

    def test_invalid_override(self):
        code, err = self.run_cli("dp-check", "--delta", "1.5")
        self.assertEqual(code, 1)
        self.assertEqual(json.loads(err)["error"], "invalid-config")

    def test_negative_drop(self):
        code, err = self.run_cli("simulate", "--drop", "-1")
        self.assertEqual(code, 2)
        self.assertEqual(json.loads(err)["error"], "usage")

    def test_interrupt(self):
        with patch("cli.cmd_simulate", side_effect=KeyboardInterrupt):
            code, err = self.run_cli("simulate")
        self.assertEqual(code, 130)
        self.assertEqual(json.loads(err)["error"], "interrupted")


if __name__ == "__main__":
    unittest.main()

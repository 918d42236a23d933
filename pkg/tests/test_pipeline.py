#!/usr/bin/env python3
"""
Tests for the per-drop simulation graph.
"""

import math
import unittest
from pathlib import Path
from unittest.mock import patch

import sys
sys.path.append(str(Path(__file__).parent.parent))

from data_model import ExperimentConfig, SweepSettings, SystemConfig
from langgraph.graph import END
from pipeline import drop_result, initial_state, run_drop, should_continue, simulate_drop
from nodes.rich_output import formatter
from sim.errors import InvalidArgumentError


def small_config(mode="sync-adc", power_mode="sca"):
    return ExperimentConfig(
        system=SystemConfig(num_aps=5, num_ues=2, rounds=6),
        sweep=SweepSettings(mode=mode, power_mode=power_mode, num_drops=1, values=[1]),
    ).validate()


class TestRouting(unittest.TestCase):

    def test_should_continue(self):
        """Status names the next stage; terminal states end the graph."""
        self.assertEqual(should_continue({"status": "scheduling"}), "schedule")
        self.assertEqual(should_continue({"status": "power"}), "power")
        self.assertEqual(should_continue({"status": "privacy"}), "privacy")
        self.assertEqual(should_continue({"status": "completed"}), END)
        self.assertEqual(should_continue({"status": "failed"}), END)

    def test_initial_state(self):
        """Mode, power mode and seed default to the config."""
        config = small_config()
        state = initial_state(config, drop=3)
        self.assertEqual(state["seed"], config.seed)
        self.assertEqual(state["mode"], "sync-adc")
        self.assertEqual(state["status"], "topology")
        self.assertEqual(initial_state(config, 0, seed=9, mode="async-dac")["mode"], "async-dac")

    def test_unknown_modes_rejected(self):
        config = small_config()
        with self.assertRaises(InvalidArgumentError):
            initial_state(config, 0, mode="async-adc")
        with self.assertRaises(InvalidArgumentError):
            initial_state(config, 0, power_mode="greedy")


class TestSimulateDrop(unittest.TestCase):
    """Full drops through topology, schedule, power and privacy."""

    def setUp(self):
        formatter.set_quiet(True)

    def tearDown(self):
        formatter.set_quiet(False)

    def test_sync_adc_drop(self):
        state = simulate_drop(small_config(), drop=0)
        self.assertEqual(state["status"], "completed")
        result = drop_result(state)
        self.assertTrue(result.ok)
        self.assertEqual(len(result.powers_w), 2)
        self.assertLessEqual(result.total_time_s, result.full_power_time_s * (1 + 1e-6))
        self.assertTrue(math.isfinite(result.worst_lambda))
        self.assertEqual(result.fronthaul_bits, 2 * 1 * 10 * 5)
        self.assertEqual(result.mean_served, 2.0)

    def test_full_power_mode(self):
        """Full power has zero reduction."""
        result = run_drop(small_config(power_mode="full"), drop=0)
        self.assertTrue(result.ok)
        self.assertEqual(result.total_time_s, result.full_power_time_s)
        self.assertEqual(result.reduction_pct, 0.0)

    def test_async_dac_drop(self):
        """The lag-tolerant mode records the schedule."""
        state = simulate_drop(small_config(mode="async-dac"), drop=1)
        self.assertEqual(state["status"], "completed")
        self.assertEqual(len(state["masks"]), 6)
        self.assertEqual(len(state["schedule_trace"]), 6)
        result = drop_result(state)
        self.assertEqual(result.mode, "async-dac")
        self.assertTrue(1.0 <= result.mean_served <= 2.0)
        self.assertTrue(math.isnan(result.fronthaul_bits))

    def test_sync_dac_drop(self):
        result = run_drop(small_config(mode="sync-dac"), drop=0)
        self.assertTrue(result.ok)
        self.assertEqual(result.mode, "sync-dac")

    def test_deterministic(self):
        """Same (config, seed, drop), same record."""
        config = small_config()
        self.assertEqual(run_drop(config, 2, seed=11), run_drop(config, 2, seed=11))

    def test_failure_becomes_record(self):
        """A LabError in a stage fails the drop without raising."""
        with patch("nodes.topology.drop_channel", side_effect=InvalidArgumentError("bad geometry")):
            result = run_drop(small_config(), drop=0)
        self.assertFalse(result.ok)
        self.assertEqual(result.status, "failed")
        self.assertEqual(result.error["error"], "invalid-argument")
        self.assertTrue(math.isnan(result.total_time_s))


if __name__ == "__main__":
    unittest.main()

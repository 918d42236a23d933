#!/usr/bin/env python3
"""
Tests for SCA power control and the full-power baseline.
"""

import itertools
import unittest
from pathlib import Path

import numpy as np

import sys
sys.path.append(str(Path(__file__).parent.parent))

from data_model import ChannelParams, SolverOptions, SystemConfig
from sim.channel import drop_channel
from sim.errors import ProtocolError, UnservedUeError
from sim.link_rate import SinrModel, TimingModel, uplink_time_async
from sim.power_control import (
    DacScenario,
    PowerScenario,
    full_power_baseline,
    rate_lower_bound,
    ScaState,
    sca_solve,
    sca_solve_dac,
    solve_subproblem,
)
from sim.quantization import aqnm_gain


def unit_scenario(signal, coupling, floor):
    model = SinrModel(np.asarray(signal, float), np.asarray(coupling, float), np.asarray(floor, float))
    return PowerScenario(model, TimingModel(update_bits=1.0, rounds=1, prelog=1.0), max_power=1.0)


def drop_scenario(seed, bits=3):
    cfg = SystemConfig(num_aps=6, num_ues=3, rounds=10)
    beta = drop_channel(cfg, ChannelParams(), seed).beta
    return PowerScenario.adc(beta, aqnm_gain(bits), cfg)


class TestRateLowerBound(unittest.TestCase):
    """Concave minorant of the rate."""

    def setUp(self):
        self.model = SinrModel(np.array([2.0, 1.5]), np.array([[0.1, 0.3], [0.2, 0.05]]), np.array([1.0, 0.5]))
        self.u0 = np.array([0.6, 0.8])

    def test_tight_at_expansion(self):
        np.testing.assert_allclose(rate_lower_bound(self.u0, self.u0, self.model, 1.0),
                                   self.model.rates(self.u0 ** 2, 1.0), rtol=1e-12)

    def test_below_true_rate(self):
        """Random points near the expansion point stay under the true rate."""
        rng = np.random.default_rng(0)
        for u in np.clip(self.u0 + 0.3 * rng.standard_normal((2000, 2)), 0.0, None):
            self.assertTrue(np.all(rate_lower_bound(u, self.u0, self.model, 1.0)
                                   <= self.model.rates(u ** 2, 1.0) + 1e-9))

    def test_finite_at_zero(self):
        self.assertTrue(np.all(np.isfinite(rate_lower_bound(np.zeros(2), self.u0, self.model, 1.0))))


class TestSolveSubproblem(unittest.TestCase):
    """One convex step of the outer loop."""

    def test_step_does_not_increase_time(self):
        scenario = drop_scenario(4)
        u0 = np.full(scenario.num_ues, np.sqrt(scenario.max_power / 2.0))
        report = scenario.evaluate(u0 ** 2)
        state = ScaState(u=u0, R=scenario.rates(u0 ** 2), x=report.total,
                         x1=float(report.per_ue_time.max()), x2=report.fronthaul_time)
        options = SolverOptions()
        step = solve_subproblem(state, scenario, options)
        self.assertEqual(step.iteration, 1)
        self.assertLessEqual(step.x, state.x + options.monotone_slack * max(1.0, state.x))
        self.assertTrue(np.all(step.powers <= scenario.max_power * (1 + 1e-12)))
        self.assertAlmostEqual(step.x, scenario.evaluate(step.powers).total)


class TestScaSolve(unittest.TestCase):
    """Outer SCA loop."""

    def test_single_ue_closed_form(self):
        """One UE, unit everything: full power, R = 1, time 1 + 1."""
        solution = sca_solve(unit_scenario([1.0], [[0.0]], [1.0]))
        self.assertAlmostEqual(solution.allocation.p[0], 1.0, places=5)
        self.assertAlmostEqual(solution.rates.r[0], 1.0, places=5)
        self.assertAlmostEqual(solution.total_time, 2.0, places=5)

    def test_single_ue_from_full_power(self):
        """Starting at full power a single UE stops within two iterations."""
        solution = sca_solve(unit_scenario([1.0], [[0.0]], [1.0]), SolverOptions(initial_point="full"))
        self.assertLessEqual(solution.iterations, 2)
        self.assertAlmostEqual(solution.total_time, 2.0, places=6)

    def test_symmetric_instance(self):
        """Equal rows give equal powers."""
        solution = sca_solve(unit_scenario([1.0, 1.0], [[0.0, 0.4], [0.4, 0.0]], [0.2, 0.2]))
        self.assertAlmostEqual(solution.allocation.p[0], solution.allocation.p[1], places=4)

    def test_monotone_and_feasible(self):
        """Objective never increases; powers within [0, p_max]."""
        scenario = drop_scenario(1)
        solution = sca_solve(scenario)
        trace = solution.trace
        self.assertTrue(all(b <= a * (1 + 1e-8) for a, b in zip(trace, trace[1:])))
        self.assertTrue(np.all(solution.allocation.p >= 0))
        self.assertTrue(np.all(solution.allocation.p <= scenario.max_power))
        self.assertAlmostEqual(solution.total_time, scenario.evaluate(solution.allocation.p).total)

    def test_not_worse_than_full_power(self):
        """Across drops the result never exceeds the full-power time."""
        for seed in range(5):
            scenario = drop_scenario(seed)
            self.assertLessEqual(sca_solve(scenario).total_time,
                                 full_power_baseline(scenario).total_time * (1 + 1e-6))

    def test_grid_search(self):
        """Random K = 2 instance within 2% of a 200 x 200 grid."""
        scenario = unit_scenario([3.0, 1.2], [[0.0, 0.6], [0.9, 0.0]], [0.4, 0.3])
        grid = np.linspace(1e-3, 1.0, 200)
        best = min(scenario.evaluate(np.array(p)).total for p in itertools.product(grid, grid))
        self.assertLessEqual(sca_solve(scenario).total_time, best * 1.02)

    def test_huge_tolerance_stops_early(self):
        solution = sca_solve(drop_scenario(2), SolverOptions(tolerance_s=1e9))
        self.assertLessEqual(solution.iterations, 1)

    def test_unserved_ue(self):
        """A UE with no path to any AP has no rate."""
        cfg = SystemConfig(num_aps=2, num_ues=2)
        beta = np.array([[1e-9, 0.0], [2e-9, 0.0]])
        with self.assertRaises(UnservedUeError):
            full_power_baseline(PowerScenario.adc(beta, 0.9, cfg))
        with self.assertRaises(UnservedUeError):
            sca_solve(PowerScenario.adc(beta, 0.9, cfg))


class TestScaSolveDac(unittest.TestCase):
    """Per-round masked DAC solve."""

    def setUp(self):
        self.cfg = SystemConfig(num_aps=3, num_ues=2, rounds=3)
        self.beta = drop_channel(self.cfg, ChannelParams(), 3).beta

    def test_single_round_matches_sync(self):
        """One full-mask round reduces to the synchronous solve on the same instance."""
        cfg = SystemConfig(num_aps=3, num_ues=2, rounds=1)
        mask = np.ones((3, 2), dtype=np.int8)
        dac = sca_solve_dac(DacScenario.from_config(self.beta, 0.9, [mask], cfg))
        sync = sca_solve(PowerScenario.dac(self.beta, 0.9, mask, cfg))
        np.testing.assert_allclose(dac.powers[0], sync.allocation.p, rtol=1e-9)

    def test_repeated_masks_solved_once(self):
        masks = [np.array([[1, 0], [1, 1], [0, 1]])] * 3
        solution = sca_solve_dac(DacScenario.from_config(self.beta, 0.8, masks, self.cfg))
        self.assertEqual(solution.distinct_masks, 1)
        self.assertAlmostEqual(solution.total_time,
                               uplink_time_async(solution.rates, masks, self.cfg.update_size_bits).total)

    def test_silent_ue_gets_zero_power(self):
        masks = [np.array([[1, 0], [1, 0], [0, 0]]), np.ones((3, 2))]
        solution = sca_solve_dac(DacScenario.from_config(self.beta, 0.8, masks, self.cfg), baseline=True)
        self.assertEqual(solution.powers[0, 1], 0.0)
        self.assertEqual(solution.powers[1, 1], self.cfg.max_power_w)

    def test_empty_active_set(self):
        masks = [np.zeros((3, 2), dtype=np.int8)]
        with self.assertRaises(ProtocolError):
            sca_solve_dac(DacScenario.from_config(self.beta, 0.8, masks, self.cfg))


if __name__ == "__main__":
    unittest.main()

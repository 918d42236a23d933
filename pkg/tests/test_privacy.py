#!/usr/bin/env python3
"""
Tests for the differential-privacy accountant.
"""

import math
import unittest
from pathlib import Path

import numpy as np

import sys
sys.path.append(str(Path(__file__).parent.parent))

from sim.errors import InvalidArgumentError, MarginViolationError, ZeroNoiseError
from sim.privacy import (
    DpBudget,
    DpLedger,
    PrivacyScenario,
    accumulate_lambda,
    check_dp,
    dp_condition_dac,
    dp_violation_bound,
    dp_violation_tail,
    effective_noise_std_adc,
    effective_noise_std_dac,
    ledger_from_rounds,
    max_bits_for_budget,
    min_bits_for_budget,
    monte_carlo_violation,
    privacy_report_adc,
    privacy_report_dac,
    sensitivity_adc,
    sensitivity_dac,
)


def closed_form(lam, eps):
    return math.sqrt(2 * lam) / (math.sqrt(math.pi) * (eps - lam)) * math.exp(-(eps - lam) ** 2 / (2 * lam))


class TestSensitivity(unittest.TestCase):
    """Worst-case change of the received signal."""

    def test_zero_power(self):
        """Silent UEs leak nothing."""
        h = np.ones((2, 2), dtype=complex)
        self.assertEqual(sensitivity_adc(np.zeros(2), 0.5, h, 0), 0.0)

    def test_unit_channel(self):
        """alpha = 1, one AP, unit channels and powers gives 2."""
        h = np.ones((1, 2), dtype=complex)
        self.assertAlmostEqual(sensitivity_adc(np.ones(2), 1.0, h, 0), 2.0)

    def test_brute_force_max(self):
        """Random 2 x 2 instance against the exhaustive maximum."""
        rng = np.random.default_rng(5)
        h = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        p = rng.uniform(0.1, 1.0, 2)
        alpha = 0.7
        for k in range(2):
            expected = max(2 * alpha * math.sqrt(p[i]) * sum(abs(np.conj(h[l, k]) * h[l, i]) for l in range(2))
                           for i in range(2))
            self.assertAlmostEqual(sensitivity_adc(p, alpha, h, k), expected, places=12)

    def test_per_ap_and_statistics(self):
        """Per-AP aggregation picks one AP; statistics use sqrt(beta beta)."""
        beta = np.array([[4.0, 1.0], [1.0, 9.0]])
        p = np.ones(2)
        self.assertAlmostEqual(sensitivity_adc(p, 1.0, beta, 0, "per-ap", ap=0, statistics=True), 2 * 4.0)
        self.assertAlmostEqual(sensitivity_adc(p, 1.0, beta, 0, "sum", statistics=True), 2 * max(4 + 1, 2 + 3))
        with self.assertRaises(InvalidArgumentError):
            sensitivity_adc(p, 1.0, beta, 0, "other", statistics=True)

    def test_dac_sensitivity(self):
        """2 max over served UEs of sqrt(p) |h|; zero for an idle AP."""
        h = np.array([[1.0, 2.0], [3.0, 0.5]])
        mask = np.array([[1, 0], [0, 0]])
        p = np.array([0.25, 1.0])
        self.assertAlmostEqual(sensitivity_dac(p, h, mask, 0), 2 * 0.5 * 1.0)
        self.assertEqual(sensitivity_dac(p, h, mask, 1), 0.0)


class TestEffectiveNoise(unittest.TestCase):
    """Noise the uplink adds for free."""

    def test_perfect_adc(self):
        """alpha = 1 leaves the thermal term."""
        beta = np.array([[0.5, 2.0], [1.5, 1.0]])
        self.assertAlmostEqual(effective_noise_std_adc(np.ones(2), 1.0, beta, 3.0, 0) ** 2, 2.0 * 3.0)

    def test_single_link(self):
        """L = 1, beta = 1, sigma^2 = 1, alpha = 0.5, p = 4 gives 1.5."""
        self.assertAlmostEqual(effective_noise_std_adc(np.array([4.0]), 0.5, np.array([[1.0]]), 1.0, 0) ** 2, 1.5)

    def test_no_path(self):
        """All beta = 0 gives 0."""
        self.assertEqual(effective_noise_std_adc(np.ones(2), 0.5, np.zeros((2, 2)), 1.0, 1), 0.0)

    def test_dac_noise(self):
        """Distortion of served UEs plus thermal noise at the AP."""
        beta = np.array([[2.0, 1.0]])
        mask = np.array([[1, 0]])
        got = effective_noise_std_dac(np.array([0.5, 1.0]), beta, 0.5, mask, 0.1, 0)
        self.assertAlmostEqual(got ** 2, 2.0 * 0.25 * 0.5 + 0.1)


class TestLedger(unittest.TestCase):
    """Lambda accumulation."""

    def test_zero_sensitivity(self):
        """Delta = 0 leaves Lambda unchanged."""
        ledger = accumulate_lambda(DpLedger(lam=0.7), 0.0, 2.0)
        self.assertEqual(ledger.lam, 0.7)
        self.assertEqual(ledger.rounds, 1)

    def test_unit_ratio(self):
        self.assertEqual(accumulate_lambda(DpLedger(), 1.0, 1.0).lam, 1.0)

    def test_three_rounds(self):
        """Ratios 1, 2, 3 sum to 14."""
        self.assertAlmostEqual(ledger_from_rounds([1.0, 4.0, 9.0], [1.0, 2.0, 3.0]).lam, 14.0)

    def test_zero_noise(self):
        """Sensitivity without noise has no privacy."""
        with self.assertRaises(ZeroNoiseError):
            accumulate_lambda(DpLedger(), 1.0, 0.0)

    def test_functional_update(self):
        """The input ledger is not modified."""
        ledger = DpLedger()
        accumulate_lambda(ledger, 1.0, 1.0)
        self.assertEqual(ledger.lam, 0.0)


class TestViolationBound(unittest.TestCase):
    """Closed-form violation bound."""

    def test_vanishing_lambda(self):
        self.assertEqual(dp_violation_bound(0.0, 1.0), 0.0)
        self.assertLess(dp_violation_bound(1e-6, 1.0), 1e-12)

    def test_spot_value(self):
        """Lambda = 1, epsilon = 3."""
        self.assertAlmostEqual(dp_violation_bound(1.0, 3.0), closed_form(1.0, 3.0), places=12)
        self.assertAlmostEqual(dp_violation_bound(1.0, 3.0), 0.053991, delta=1e-5)

    def test_zero_margin(self):
        with self.assertRaises(MarginViolationError):
            dp_violation_bound(1.0, 1.0)

    def test_tail_below_bound(self):
        """The exact tail never exceeds the closed form."""
        for lam, eps in [(0.1, 1.0), (1.0, 3.0), (2.0, 10.0), (5.0, 6.0)]:
            self.assertLessEqual(dp_violation_tail(lam, eps), dp_violation_bound(lam, eps))

    def test_check_dp_verdicts(self):
        """Pass, bound above delta and margin violation."""
        budget = DpBudget(epsilon=3.0, delta=0.1)
        self.assertTrue(check_dp(1.0, budget).passed)
        failed = check_dp(1.0, DpBudget(epsilon=3.0, delta=0.01))
        self.assertFalse(failed.passed)
        self.assertEqual(failed.reason, "bound-exceeds-delta")
        margin = check_dp(4.0, budget)
        self.assertFalse(margin.passed)
        self.assertEqual(margin.reason, "margin-violation")

    def test_budget_validation(self):
        with self.assertRaises(InvalidArgumentError):
            DpBudget(epsilon=0.0, delta=0.1)
        with self.assertRaises(InvalidArgumentError):
            DpBudget(epsilon=1.0, delta=1.0)

    def test_dac_condition(self):
        """All-zero sensitivities give 0; one round reduces to the ADC form."""
        self.assertEqual(dp_condition_dac([0.0, 0.0], [1.0, 1.0], 2.0), 0.0)
        self.assertAlmostEqual(dp_condition_dac([1.0], [2.0], 3.0), dp_violation_bound(0.25, 3.0))


class TestMonteCarlo(unittest.TestCase):
    """Empirical violation frequency."""

    def test_no_sensitivity(self):
        self.assertEqual(monte_carlo_violation([0.0], [1.0], 1.0, 20_000, seed=1), 0.0)

    def test_below_bound(self):
        """Lambda = 1, epsilon = 3: frequency below the bound plus 3 standard errors."""
        n = 200_000
        freq = monte_carlo_violation([1.0], [1.0], 3.0, n, seed=2)
        bound = dp_violation_bound(1.0, 3.0)
        self.assertLessEqual(freq, bound + 3 * math.sqrt(bound * (1 - bound) / n))

    def test_reproducible_across_workers(self):
        """Same seed gives the same estimate for any worker count."""
        args = ([0.5, 1.0], [1.0, 0.8], 2.0, 50_000)
        self.assertEqual(monte_carlo_violation(*args, seed=3), monte_carlo_violation(*args, seed=3))
        self.assertEqual(monte_carlo_violation(*args, seed=3, workers=1),
                         monte_carlo_violation(*args, seed=3, workers=4))

    def test_minimum_samples(self):
        with self.assertRaises(InvalidArgumentError):
            monte_carlo_violation([1.0], [1.0], 3.0, 100, seed=1)


class TestBitsForBudget(unittest.TestCase):
    """Bit depths that certify a budget."""

    def setUp(self):
        self.scenario = PrivacyScenario(powers=np.array([1.0]), beta=np.array([[1.0]]), noise_power=1.0, rounds=1)

    def test_slack_budget(self):
        """A loose delta is met at the smallest bit depth."""
        tiny = PrivacyScenario(powers=np.array([1e-8]), beta=np.array([[1.0]]), noise_power=1.0, rounds=1)
        self.assertEqual(min_bits_for_budget(DpBudget(10.0, 0.999), tiny, range(2, 9)), 2)

    def test_infeasible(self):
        """delta near zero cannot be met."""
        self.assertIsNone(min_bits_for_budget(DpBudget(10.0, 1e-300), self.scenario, range(1, 11)))
        self.assertIsNone(max_bits_for_budget(DpBudget(10.0, 1e-300), self.scenario, range(1, 11)))

    def test_matches_exhaustive_scan(self):
        """min and max agree with a scan over every bit depth."""
        budget = DpBudget(10.0, 1e-3)
        passing = [b for b in range(1, 11) if check_dp(self.scenario.lambda_for_bits(b), budget).passed]
        self.assertTrue(passing)
        self.assertEqual(min_bits_for_budget(budget, self.scenario, range(1, 11)), min(passing))
        self.assertEqual(max_bits_for_budget(budget, self.scenario, range(1, 11)), max(passing))

    def test_empty_range(self):
        with self.assertRaises(InvalidArgumentError):
            min_bits_for_budget(DpBudget(1.0, 0.1), self.scenario, [])


class TestReports(unittest.TestCase):
    """Per-entity reports of a drop."""

    def test_adc_report_worst_ue(self):
        """The worst UE has the largest Lambda."""
        beta = np.array([[1.0, 0.1], [0.5, 0.2]])
        report = privacy_report_adc(np.array([0.2, 0.2]), 0.8, beta, 0.5, rounds=3,
                                    budget=DpBudget(50.0, 0.1))
        self.assertEqual(report.chain, "adc")
        self.assertEqual(len(report.lambdas), 2)
        self.assertEqual(report.worst_lambda, max(report.lambdas))

    def test_dac_report_idle_ap(self):
        """An AP that serves nobody leaks nothing."""
        beta = np.array([[1.0, 0.5], [0.3, 0.2]])
        masks = [np.array([[1, 1], [0, 0]])] * 2
        report = privacy_report_dac(np.full((2, 2), 0.1), beta, 0.5, masks, 1.0, DpBudget(10.0, 0.1))
        self.assertEqual(report.lambdas[1], 0.0)
        self.assertEqual(report.worst_index, 0)


if __name__ == "__main__":
    unittest.main()

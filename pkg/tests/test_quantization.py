#!/usr/bin/env python3
"""
Tests for the additive quantization noise model.
"""

import unittest
from pathlib import Path

import numpy as np

import sys
sys.path.append(str(Path(__file__).parent.parent))

from sim.errors import InvalidArgumentError
from sim.quantization import (
    LLOYD_MAX_DISTORTION,
    QuantizerModel,
    adc_distortion_cov,
    apply_quantizer,
    aqnm_gain,
    dac_distortion_var,
    dac_gains,
    fronthaul_load_bits,
)


class TestGain(unittest.TestCase):
    """Quantizer gain from the bit depth."""

    def test_one_bit(self):
        """b = 1 gives alpha = 0.319825."""
        self.assertAlmostEqual(aqnm_gain(1), 0.319825, places=6)

    def test_ten_bits(self):
        """b = 10 gives alpha = 0.99999741."""
        self.assertAlmostEqual(aqnm_gain(10), 0.99999741, places=8)

    def test_limit_and_monotonicity(self):
        """Gain increases with b and tends to 1."""
        gains = [aqnm_gain(b) for b in range(1, 25)]
        self.assertTrue(all(a < b for a, b in zip(gains, gains[1:])))
        self.assertAlmostEqual(gains[-1], 1.0, places=12)

    def test_nonpositive_bits_rejected(self):
        """b <= 0 is invalid."""
        with self.assertRaises(InvalidArgumentError):
            aqnm_gain(0)

    def test_tabulated_and_literal(self):
        """Lloyd-Max table for small b; the literal convention returns rho itself."""
        self.assertAlmostEqual(aqnm_gain(2, tabulated=True), 1.0 - LLOYD_MAX_DISTORTION[2])
        self.assertAlmostEqual(aqnm_gain(8, tabulated=True), aqnm_gain(8))
        self.assertAlmostEqual(aqnm_gain(1, convention="literal"), 1.0 - aqnm_gain(1))
        with self.assertRaises(InvalidArgumentError):
            aqnm_gain(1, convention="other")

    def test_per_ue_dac_gains(self):
        """Shared and per-UE bit depths."""
        np.testing.assert_allclose(dac_gains(3, 4), [aqnm_gain(3)] * 4)
        np.testing.assert_allclose(dac_gains([1, 10], 2), [aqnm_gain(1), aqnm_gain(10)])
        with self.assertRaises(InvalidArgumentError):
            dac_gains([1, 2, 3], 2)


class TestDistortion(unittest.TestCase):
    """Distortion variances."""

    def test_adc_perfect_converter(self):
        """alpha = 1 has no distortion."""
        self.assertEqual(adc_distortion_cov(1.0, np.array([3.0]), np.array([2.0]), 1.0), 0.0)

    def test_adc_values(self):
        """Noise-only and signal-plus-noise cases."""
        self.assertAlmostEqual(adc_distortion_cov(0.5, np.array([0.0]), np.array([1.0]), 1.0), 0.25)
        self.assertAlmostEqual(adc_distortion_cov(0.5, np.array([4.0]), np.array([1.0]), 1.0), 1.25)

    def test_dac_values(self):
        """zeta (1 - zeta) p."""
        self.assertEqual(dac_distortion_var(1.0, 0.7), 0.0)
        self.assertAlmostEqual(dac_distortion_var(0.5, 1.0), 0.25)
        self.assertAlmostEqual(dac_distortion_var(0.319825, 0.2), 0.0435075, places=5)

    def test_fronthaul_load(self):
        """2 b d L bits per round."""
        self.assertEqual(fronthaul_load_bits(3, 10, 100), 6000.0)


class TestApplyQuantizer(unittest.TestCase):
    """Linearized quantizer on signals."""

    def test_identity(self):
        """Unit gain and no distortion leave the signal unchanged."""
        signal = np.array([1 + 2j, -3.0, 0.5j])
        out = apply_quantizer(signal, QuantizerModel.ideal(), 0.0, rng=0)
        np.testing.assert_array_equal(out, signal)

    def test_pure_noise_variance(self):
        """Zero input gives noise with the requested variance within 2%."""
        q = QuantizerModel.from_bits(2)
        out = apply_quantizer(np.zeros(100_000), q, 0.3, rng=4)
        self.assertAlmostEqual(np.mean(np.abs(out) ** 2) / 0.3, 1.0, delta=0.02)

    def test_reproducible(self):
        """Same seed, same output."""
        q = QuantizerModel.from_bits(1)
        signal = np.ones(16)
        np.testing.assert_array_equal(apply_quantizer(signal, q, 0.1, 3), apply_quantizer(signal, q, 0.1, 3))

    def test_negative_variance_rejected(self):
        with self.assertRaises(InvalidArgumentError):
            apply_quantizer(np.ones(2), QuantizerModel.ideal(), -1.0, 0)


if __name__ == "__main__":
    unittest.main()

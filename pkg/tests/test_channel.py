#!/usr/bin/env python3
"""
Tests for topology placement, path loss and small-scale fading.
"""

import csv
import math
import tempfile
import unittest
from pathlib import Path

import numpy as np

import sys
sys.path.append(str(Path(__file__).parent.parent))

from data_model import ChannelParams, Position, SystemConfig
from sim.channel import (
    Stream,
    draw_small_scale,
    drop_channel,
    export_beta_csv,
    hata_constant_db,
    large_scale_fading,
    noise_power_w,
    path_loss_db,
    place_nodes,
    rng_stream,
)


class TestPlacement(unittest.TestCase):
    """Uniform placement on the square."""

    def test_coordinates_inside_square(self):
        """All coordinates lie in [0, D]."""
        cfg = SystemConfig(num_aps=30, num_ues=10, area_side_km=1.0)
        aps, ues = place_nodes(cfg, seed=7)
        self.assertEqual(len(aps), 30)
        self.assertEqual(len(ues), 10)
        for p in aps + ues:
            self.assertTrue(0.0 <= p.x <= 1.0)
            self.assertTrue(0.0 <= p.y <= 1.0)

    def test_same_seed_same_placement(self):
        """Placement is a pure function of (seed, drop)."""
        cfg = SystemConfig()
        self.assertEqual(place_nodes(cfg, 11, drop=3), place_nodes(cfg, 11, drop=3))
        self.assertNotEqual(place_nodes(cfg, 11, drop=3), place_nodes(cfg, 11, drop=4))

    def test_mean_coordinate_is_half_side(self):
        """Empirical mean coordinate over 10^4 draws is D/2 within 3 standard errors."""
        cfg = SystemConfig(num_aps=5000, num_ues=5000, area_side_km=2.0)
        aps, ues = place_nodes(cfg, seed=1)
        xs = np.array([p.x for p in aps + ues])
        stderr = 2.0 / math.sqrt(12.0) / math.sqrt(xs.size)
        self.assertLess(abs(xs.mean() - 1.0), 3 * stderr)


class TestPathLoss(unittest.TestCase):
    """Three-slope large-scale fading."""

    def setUp(self):
        self.params = ChannelParams(shadowing=False)

    def test_equidistant_ues_equal_beta(self):
        """Two UEs at the same distance from an AP get the same gain."""
        ap = [Position(0.5, 0.5)]
        ues = [Position(0.8, 0.5), Position(0.5, 0.2)]
        beta = large_scale_fading(ap, ues, self.params)
        self.assertAlmostEqual(beta[0, 0], beta[0, 1], places=20)

    def test_monotone_beyond_far_breakpoint(self):
        """Farther UE has smaller gain."""
        ap = [Position(0.0, 0.0)]
        ues = [Position(0.1, 0.0), Position(0.4, 0.0)]
        beta = large_scale_fading(ap, ues, self.params)
        self.assertLess(beta[0, 1], beta[0, 0])

    def test_matches_hand_evaluation(self):
        """Near, middle and far slopes against the formula written out."""
        f, h_ap, h_ue = 1900.0, 15.0, 1.65
        const = (46.3 + 33.9 * math.log10(f) - 13.82 * math.log10(h_ap)
                 - (1.1 * math.log10(f) - 0.7) * h_ue + (1.56 * math.log10(f) - 0.8))
        self.assertAlmostEqual(hata_constant_db(self.params), const, places=10)

        expected = [
            -const - 15 * math.log10(0.05) - 20 * math.log10(0.01),   # d = 0.005 km
            -const - 15 * math.log10(0.05) - 20 * math.log10(0.03),   # d = 0.03 km
            -const - 35 * math.log10(0.2),                            # d = 0.2 km
        ]
        got = path_loss_db(np.array([0.005, 0.03, 0.2]), self.params)
        np.testing.assert_allclose(got, expected, rtol=1e-12)

    def test_slopes_continuous_at_breakpoints(self):
        """The model is continuous at both breakpoints."""
        eps = 1e-9
        for d in (self.params.near_km, self.params.far_km):
            below, above = path_loss_db(np.array([d - eps, d + eps]), self.params)
            self.assertAlmostEqual(below, above, places=5)

    def test_shadowing_only_beyond_far_breakpoint(self):
        """Links inside the far breakpoint are not shadowed."""
        params = ChannelParams(shadowing=True, shadowing_std_db=8.0)
        ap = [Position(0.0, 0.0)]
        ues = [Position(0.02, 0.0), Position(0.5, 0.0)]
        plain = large_scale_fading(ap, ues, self.params)
        shadowed = large_scale_fading(ap, ues, params, rng_stream(3, Stream.SHADOWING, 0))
        self.assertEqual(plain[0, 0], shadowed[0, 0])
        self.assertNotEqual(plain[0, 1], shadowed[0, 1])

    def test_noise_power_helper(self):
        """k_B T0 B NF at 20 MHz and 9 dB is the configured default."""
        self.assertAlmostEqual(noise_power_w(20e6, 9.0) / SystemConfig().noise_power_w, 1.0, places=3)


class TestSmallScale(unittest.TestCase):
    """CN(0, 1) small-scale fading."""

    def test_reproducible(self):
        """Fixed seed gives a fixed matrix."""
        cfg = SystemConfig(num_aps=4, num_ues=2)
        np.testing.assert_array_equal(draw_small_scale(cfg, 5, block=2), draw_small_scale(cfg, 5, block=2))
        self.assertFalse(np.array_equal(draw_small_scale(cfg, 5, block=2), draw_small_scale(cfg, 5, block=3)))

    def test_unit_power_and_half_variance_parts(self):
        """E|g|^2 = 1 and each part has variance 1/2, within 1% over 10^5 samples."""
        cfg = SystemConfig(num_aps=1000, num_ues=100)
        g = draw_small_scale(cfg, 9).ravel()
        self.assertAlmostEqual(np.mean(np.abs(g) ** 2), 1.0, delta=0.01)
        self.assertAlmostEqual(np.var(g.real), 0.5, delta=0.005)
        self.assertAlmostEqual(np.var(g.imag), 0.5, delta=0.005)


class TestDropChannel(unittest.TestCase):
    """Assembled drops and their CSV export."""

    def test_drop_shapes_and_determinism(self):
        """beta and g are L x K and repeat for the same (seed, drop)."""
        cfg = SystemConfig(num_aps=6, num_ues=3)
        first = drop_channel(cfg, ChannelParams(), 21, drop=2)
        second = drop_channel(cfg, ChannelParams(), 21, drop=2)
        self.assertEqual(first.beta.shape, (6, 3))
        self.assertEqual(first.h.shape, (6, 3))
        np.testing.assert_array_equal(first.beta, second.beta)
        np.testing.assert_array_equal(first.g, second.g)
        self.assertTrue(np.all(first.beta > 0))

    def test_export_beta_csv(self):
        """One row per AP, one column per UE after the index column."""
        beta = np.array([[1.0, 2.0], [3.0, 4.5e-12]])
        with tempfile.TemporaryDirectory() as tmp:
            path = export_beta_csv(beta, Path(tmp) / "sub" / "beta.csv")
            with open(path) as f:
                rows = list(csv.reader(f))
        self.assertEqual(rows[0], ["ap", "ue_0", "ue_1"])
        self.assertEqual(len(rows), 3)
        self.assertEqual(float(rows[2][2]), 4.5e-12)


if __name__ == "__main__":
    unittest.main()

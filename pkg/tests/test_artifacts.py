#!/usr/bin/env python3
"""
Tests for the CSV, JSON and SVG writers.
"""

import csv
import json
import math
import tempfile
import unittest
from pathlib import Path

import numpy as np

import sys
sys.path.append(str(Path(__file__).parent.parent))

from artifacts import format_cell, plain, plot_sweep, plot_trace, write_csv, write_json, write_records_csv
from data_model import TraceRow
from sim.errors import EmptyResultError


class TestFormatting(unittest.TestCase):

    def test_cells(self):
        """Floats round-trip through repr; NaN, bools, None and numpy scalars have fixed spellings."""
        self.assertEqual(format_cell(0.1), "0.1")
        self.assertEqual(float(format_cell(1 / 3)), 1 / 3)
        self.assertEqual(format_cell(math.nan), "nan")
        self.assertEqual(format_cell(True), "true")
        self.assertEqual(format_cell(None), "")
        self.assertEqual(format_cell(np.float64(2.5)), "2.5")
        self.assertEqual(format_cell({"error": "unserved-ue", "message": "x"}), "unserved-ue")

    def test_plain(self):
        """numpy to lists, non-finite floats to None."""
        payload = plain({"a": np.array([1.0, np.inf]), "b": (1, 2), "c": math.nan})
        self.assertEqual(payload, {"a": [1.0, None], "b": [1, 2], "c": None})


class TestWriters(unittest.TestCase):

    def test_csv_and_records(self):
        rows = [TraceRow(0, 1.0, 0.5, 0.5, 0.0, 0, 0.0), TraceRow(1, 0.8, 0.3, 0.4, 0.2, 2, 1e-3)]
        with tempfile.TemporaryDirectory() as tmp:
            path = write_records_csv(Path(tmp) / "nested" / "trace.csv", rows)
            with open(path) as f:
                lines = list(csv.reader(f))
        self.assertEqual(lines[0], ["round", "loss", "gap", "bound", "lambda", "served_count", "energy_j"])
        self.assertEqual(lines[2], ["1", "0.8", "0.3", "0.4", "0.2", "2", "0.001"])

    def test_empty_records(self):
        with self.assertRaises(EmptyResultError):
            write_records_csv("/tmp/never.csv", [])

    def test_json_sorted_and_plain(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_json(Path(tmp) / "out.json", {"b": np.int64(2), "a": math.inf})
            text = path.read_text()
        self.assertLess(text.index('"a"'), text.index('"b"'))
        self.assertEqual(json.loads(text), {"a": None, "b": 2})

    def test_plain_csv(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_csv(Path(tmp) / "t.csv", ["x", "y"], [[1, 0.25]])
            self.assertEqual(path.read_text(), "x,y\n1,0.25\n")


class TestPlots(unittest.TestCase):

    def test_trace_plot_is_deterministic(self):
        """Same rows, byte-identical SVG."""
        rows = [TraceRow(t, 1.0 / (t + 1), 0.5 ** t, 0.6 ** t, 0.1 * t, 2, 0.0) for t in range(5)]
        with tempfile.TemporaryDirectory() as tmp:
            first = plot_trace(Path(tmp) / "a.svg", rows).read_bytes()
            second = plot_trace(Path(tmp) / "b.svg", rows).read_bytes()
        self.assertTrue(first.startswith(b"<?xml"))
        self.assertEqual(first, second)

    def test_empty_plots(self):
        with self.assertRaises(EmptyResultError):
            plot_trace("/tmp/never.svg", [])
        with self.assertRaises(EmptyResultError):
            plot_sweep("/tmp/never.svg", [])


if __name__ == "__main__":
    unittest.main()

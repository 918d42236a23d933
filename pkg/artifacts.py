#!/usr/bin/env python3
"""
Result files: CSV tables, JSON documents and SVG line plots.

Every writer is deterministic for fixed inputs: floats are written with
repr(), JSON keys are sorted and SVG files carry no timestamp and a fixed
hash salt.
"""

import csv
import json
import logging
import math
from dataclasses import asdict, fields, is_dataclass
from pathlib import Path
from typing import Any, Iterable, List, Sequence, Union

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from data_model import column_names  # noqa: E402
from sim.errors import EmptyResultError, ResultsIOError  # noqa: E402

logger = logging.getLogger(__name__)

plt.rcParams["svg.hashsalt"] = "cfl-lab"
plt.rcParams["svg.fonttype"] = "none"


def format_cell(value: Any) -> str:
    """One CSV cell."""
    if value is None:
        return ""
    if isinstance(value, np.generic):
        return format_cell(value.item())
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(value)
    if isinstance(value, dict):
        return value.get("error", json.dumps(value, sort_keys=True))
    return str(value)


def plain(value: Any) -> Any:
    """JSON-safe copy: numpy to Python, NaN and inf to None."""
    if is_dataclass(value) and not isinstance(value, type):
        value = asdict(value)
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if hasattr(value, "tolist"):
        return plain(value.tolist())
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _target(path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ResultsIOError(f"cannot create {path.parent}: {exc}", path=str(path)) from exc
    return path


def write_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = _target(path)
    try:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_cell(v) for v in row])
    except OSError as exc:
        raise ResultsIOError(f"cannot write {path}: {exc}", path=str(path)) from exc
    logger.debug("wrote %s", path)
    return path


def write_records_csv(path: Union[str, Path], records: Sequence[Any], record_type: type = None) -> Path:
    """Dataclass records, one row each, columns in field order."""
    if not records:
        raise EmptyResultError("no rows to write", path=str(path))
    record_type = record_type or type(records[0])
    names = [f.name for f in fields(record_type)]
    return write_csv(path, column_names(record_type), ([getattr(r, n) for n in names] for r in records))


def write_json(path: Union[str, Path], payload: Any) -> Path:
    path = _target(path)
    try:
        with open(path, "w") as f:
            json.dump(plain(payload), f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as exc:
        raise ResultsIOError(f"cannot write {path}: {exc}", path=str(path)) from exc
    return path


def _save_svg(fig, path: Path) -> Path:
    path = _target(path)
    try:
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as exc:
        raise ResultsIOError(f"cannot write {path}: {exc}", path=str(path)) from exc
    finally:
        plt.close(fig)
    return path


def plot_lines(path: Union[str, Path], x: Sequence[float], series: dict, xlabel: str, ylabel: str,
               title: str = "", log_y: bool = False) -> Path:
    """Line plot of named series over a shared x axis."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for label, y in series.items():
        ax.plot(list(x), list(y), marker="o", markersize=3, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if log_y:
        ax.set_yscale("log")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    if len(series) > 1:
        ax.legend()
    fig.tight_layout()
    return _save_svg(fig, Path(path))


def plot_sweep(path: Union[str, Path], summary: Sequence[Any]) -> Path:
    """Mean uplink time (and the full-power reference) over the sweep axis."""
    if not summary:
        raise EmptyResultError("no sweep summary to plot")
    axis = summary[0].axis
    values = [row.value for row in summary]
    series = {
        "power control": [row.mean_time_s for row in summary],
        "full power": [row.mean_full_power_time_s for row in summary],
    }
    return plot_lines(path, values, series, axis, "mean uplink training time (s)")


def plot_trace(path: Union[str, Path], rows: List[Any]) -> Path:
    """Optimality gap and its bound per round."""
    if not rows:
        raise EmptyResultError("no training rounds to plot")
    rounds = [row.round for row in rows]
    series = {"gap": [max(row.gap, 1e-300) for row in rows],
              "bound": [max(row.bound, 1e-300) for row in rows]}
    return plot_lines(path, rounds, series, "round", "F(w) - F*", log_y=True)

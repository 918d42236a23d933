#!/usr/bin/env python3
"""
Sweeps over one configuration axis.

Every (axis value, drop) point runs the per-drop pipeline with its own random
streams. Drop d uses the same streams at every axis value, so values are
compared on common channel realizations. Points run in a process pool and are
merged back by index; the tables do not depend on the worker count.
"""

import copy
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from artifacts import plot_sweep, write_records_csv
from data_model import DropResult, ExperimentConfig, SweepRow, SweepSummaryRow
from nodes.config import config_hash, drop_hash, validate_sweep_axis
from nodes.rich_output import formatter
from pipeline import run_drop
from run_store import drop_key, load_drops_sync, save_drops_sync
from sim.errors import ConfigError, EmptyResultError, SweepError

logger = logging.getLogger(__name__)

# (point index, config, drop, seed, mode, power mode)
PointTask = Tuple[int, ExperimentConfig, int, int, str, str]


@dataclass
class SweepTable:
    rows: List[SweepRow]
    summary: List[SweepSummaryRow]
    config_hash: str


def apply_axis(config: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    """Copy of config with the axis set to value."""
    if not validate_sweep_axis(axis):
        raise ConfigError(f"unknown sweep axis {axis!r}", axis=axis)
    point = copy.deepcopy(config)
    if axis == "bits":
        bits = int(value)
        point.quantization.adc_bits = bits
        point.quantization.dac_bits = bits
        if point.quantization.dac_bits_per_ue is not None:
            point.quantization.dac_bits_per_ue = [bits] * point.system.num_ues
    elif axis == "num_aps":
        point.system.num_aps = int(value)
    elif axis == "num_ues":
        if point.quantization.dac_bits_per_ue is not None:
            raise ConfigError("dac_bits_per_ue cannot be combined with a num_ues sweep", axis=axis)
        point.system.num_ues = int(value)
    elif axis == "lag_tolerance":
        point.schedule.lag_tolerance = int(value)
    else:
        point.schedule.lag_percent = float(value)
    return point.validate()


def _quiet_worker():
    formatter.set_quiet(True)


def _run_point(task: PointTask) -> DropResult:
    _, config, drop, seed, mode, power_mode = task
    return run_drop(config, drop, seed, mode, power_mode)


def _sweep_row(axis: str, value: float, result: DropResult) -> SweepRow:
    return SweepRow(
        axis=axis,
        value=value,
        drop=result.drop,
        seed=result.seed,
        config_hash=result.config_hash,
        status=result.status,
        total_time_s=result.total_time_s,
        full_power_time_s=result.full_power_time_s,
        reduction_pct=result.reduction_pct,
        mean_served=result.mean_served,
        worst_lambda=result.worst_lambda,
        dp_bound=result.dp_bound,
        dp_passed=result.dp_passed,
        fronthaul_bits=result.fronthaul_bits,
        error=(result.error or {}).get("error", ""),
    )


def _mean(values: Sequence[float]) -> float:
    return float(np.mean(values)) if len(values) else math.nan


def summarize(axis: str, value: float, results: Sequence[DropResult], seed: int, point_hash: str) -> SweepSummaryRow:
    """Mean over the successful drops at one axis value."""
    ok = [r for r in results if r.ok]
    times = [r.total_time_s for r in ok]
    return SweepSummaryRow(
        axis=axis,
        value=value,
        num_drops=len(results),
        num_ok=len(ok),
        num_failed=len(results) - len(ok),
        mean_time_s=_mean(times),
        std_time_s=float(np.std(times, ddof=1)) if len(times) > 1 else (0.0 if times else math.nan),
        mean_full_power_time_s=_mean([r.full_power_time_s for r in ok]),
        mean_reduction_pct=_mean([r.reduction_pct for r in ok]),
        mean_lambda=_mean([r.worst_lambda for r in ok]),
        dp_pass_rate=_mean([1.0 if r.dp_passed else 0.0 for r in ok]),
        seed=seed,
        config_hash=point_hash,
    )


def _execute(tasks: List[PointTask], workers: int) -> List[DropResult]:
    if not tasks:
        return []
    if workers <= 1 or len(tasks) == 1:
        was_quiet = formatter.quiet
        formatter.set_quiet(True)
        try:
            return [_run_point(task) for task in tasks]
        finally:
            formatter.set_quiet(was_quiet)
    chunksize = max(1, len(tasks) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers, initializer=_quiet_worker) as pool:
        return list(pool.map(_run_point, tasks, chunksize=chunksize))


def run_sweep(config: ExperimentConfig, workers: int = 1, seed: Optional[int] = None,
              store_path: Optional[Union[str, Path]] = None, resume: bool = False) -> SweepTable:
    """
    Run config.sweep.num_drops drops at every axis value.

    Failed points are kept as rows with their error code; the sweep fails only
    when every point fails. With store_path, finished drops are cached there and
    resume=True reuses them.
    """
    settings = config.sweep
    seed = config.seed if seed is None else seed
    start_time = time.time()

    points = [(value, apply_axis(config, settings.axis, value)) for value in settings.values]
    hashes = [config_hash(point) for _, point in points]
    tasks: List[PointTask] = []
    keys: List[str] = []
    for (value, point), point_hash in zip(points, hashes):
        for drop in range(settings.num_drops):
            tasks.append((len(tasks), point, drop, seed, settings.mode, settings.power_mode))
            keys.append(drop_key(drop_hash(point), seed, settings.mode, settings.power_mode, drop))

    cached: Dict[str, DropResult] = {}
    if store_path and resume:
        cached = load_drops_sync(store_path, keys)
        logger.info("resuming sweep: %d of %d drops cached", len(cached), len(keys))
    pending = [task for task, key in zip(tasks, keys) if key not in cached]
    fresh = dict(zip((task[0] for task in pending), _execute(pending, workers)))
    if store_path:
        save_drops_sync(store_path, [(keys[i], result) for i, result in fresh.items()])

    results = [cached[key] if key in cached else fresh[i] for i, key in enumerate(keys)]

    rows: List[SweepRow] = []
    summary: List[SweepSummaryRow] = []
    per_value = settings.num_drops
    for j, ((value, _), point_hash) in enumerate(zip(points, hashes)):
        chunk = results[j * per_value:(j + 1) * per_value]
        rows.extend(_sweep_row(settings.axis, value, r) for r in chunk)
        row = summarize(settings.axis, value, chunk, seed, point_hash)
        summary.append(row)
        formatter.log_node_progress(
            "Sweep", f"{settings.axis}={value:g}: mean {row.mean_time_s:.4g} s over {row.num_ok}/{row.num_drops} drops")

    if not any(r.ok for r in results):
        first = results[0].error or {}
        raise SweepError("every sweep point failed", first_error=first.get("error"),
                         first_message=first.get("message"))
    failed = sum(1 for r in results if not r.ok)
    if failed:
        formatter.notify(f"Sweep: {failed} of {len(results)} drops failed")
    formatter.log_node_progress("Sweep", f"Completed {len(results)} drops", time.time() - start_time)
    return SweepTable(rows, summary, config_hash(config))


def emit_results(table: SweepTable, out_dir: Union[str, Path], formats: Sequence[str] = ("csv",)) -> List[Path]:
    """sweep_drops.csv and sweep_summary.csv always; sweep.svg when svg is requested."""
    if not table.rows or not table.summary:
        raise EmptyResultError("sweep table is empty")
    out_dir = Path(out_dir)
    outputs = [
        write_records_csv(out_dir / "sweep_drops.csv", table.rows, SweepRow),
        write_records_csv(out_dir / "sweep_summary.csv", table.summary, SweepSummaryRow),
    ]
    if "svg" in formats:
        outputs.append(plot_sweep(out_dir / "sweep.svg", table.summary))
    return outputs

#!/usr/bin/env python3
"""
Command line for the cell-free FL lab.

    simulate        one drop through topology, schedule, power and privacy
    optimize-power  SCA power control of one drop against full power
    dp-check        privacy ledger of one drop and its bit-depth table
    train           over-the-air training on the synthetic quadratic
    sweep           Monte Carlo sweep over one configuration axis

Result files depend only on the configuration and the seed. Errors are
printed to stderr as one JSON object.
"""

import argparse
import copy
import dataclasses
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from artifacts import plain, plot_lines, plot_trace, write_csv, write_json, write_records_csv
from data_model import MODES, POWER_MODES, TraceRow
from nodes.config import (
    DEBUG,
    OUTPUT_DIR,
    STORE_PATH,
    config_hash,
    load_experiment_config,
    resolve_workers,
    save_experiment_config,
)
from nodes.power import adc_gain, dac_zeta
from nodes.privacy import drop_privacy_report, entity_rounds
from nodes.rich_output import formatter
from pipeline import drop_result, simulate_drop
from run_store import record_run_sync
from sim.channel import export_beta_csv
from sim.errors import LabError, error_from_dict
from sim.fl_engine import prepare_training, run_training
from sim.power_control import DacScenario, PowerScenario, sca_solve, sca_solve_dac
from sim.privacy import monte_carlo_violation
from sim.quantization import aqnm_gain
from sim.scheduler import schedule_csv_rows, schedule_rounds
from sweep import emit_results, run_sweep

# (status, headline metrics, files written)
CommandResult = Tuple[str, Dict[str, Any], List[Path]]


class CLIError(Exception):
    """CLI-specific errors."""
    pass


def _seed(value: str) -> int:
    try:
        seed = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed: {value}")
    if not 0 <= seed < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return seed


def _positive(value: str) -> int:
    try:
        number = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid count: {value}")
    if number < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return number


def _apply_overrides(config, args: argparse.Namespace):
    """Flags that change the scenario are folded into the config before hashing."""
    config = copy.deepcopy(config)
    if getattr(args, "drops", None) is not None:
        config.sweep.num_drops = args.drops
    if getattr(args, "mode", None):
        config.sweep.mode = args.mode
        config.training.chain = "adc" if args.mode == "sync-adc" else "dac"
        config.training.asynchronous = args.mode == "async-dac"
    if getattr(args, "power_mode", None):
        config.sweep.power_mode = args.power_mode
        config.training.power_mode = args.power_mode
    if getattr(args, "rounds", None) is not None:
        config.system.rounds = args.rounds
    if getattr(args, "epsilon", None) is not None:
        config.privacy.epsilon = args.epsilon
    if getattr(args, "delta", None) is not None:
        config.privacy.delta = args.delta
    if getattr(args, "monte_carlo", None) is not None:
        config.privacy.monte_carlo_samples = args.monte_carlo
    return config.validate()


def _formats(args: argparse.Namespace) -> Tuple[str, ...]:
    return ("csv", "svg") if args.format == "svg" else ("csv",)


def _solved_drop(config, seed: int, drop: int, power_mode: Optional[str] = None) -> Dict[str, Any]:
    state = simulate_drop(config, drop, seed, power_mode=power_mode)
    if state["status"] == "failed":
        raise error_from_dict(state["error"] or {})
    return state


def cmd_simulate(config, seed: int, args: argparse.Namespace) -> CommandResult:
    """Full pipeline for one drop: drop.json, ues.csv, beta.csv and schedule.csv (async)."""
    out = Path(args.out)
    state = _solved_drop(config, seed, args.drop)
    result = drop_result(state)
    channel = state["channel"]
    report = state["privacy"]

    trace = state["schedule_trace"]
    if trace:
        served_share = np.mean([r.mask.any(axis=0) for r in trace], axis=0)
    else:
        served_share = np.ones(channel.num_ues)
    ue_rows = []
    for k, pos in enumerate(channel.ue_positions or []):
        lam = report.lambdas[k] if report.chain == "adc" else float("nan")
        ue_rows.append([k, pos.x, pos.y, result.powers_w[k], result.rates_bps[k], float(served_share[k]), lam])
    columns = ["ue", "x_km", "y_km", "power_w", "rate_bps", "served_share", "lambda"]

    outputs = [
        write_json(out / "drop.json", result),
        write_csv(out / "ues.csv", columns, ue_rows),
        export_beta_csv(channel.beta, out / "beta.csv"),
    ]
    if trace:
        outputs.append(write_csv(out / "schedule.csv", ["round", "ue", "category", "staleness", "serving_aps"],
                                 schedule_csv_rows(trace)))
        formatter.print_served_shares([len(r.active) / channel.num_ues for r in trace])
    formatter.print_ue_table(f"Drop {args.drop}", columns, ue_rows)

    metrics = {
        "total_time_s": result.total_time_s,
        "full_power_time_s": result.full_power_time_s,
        "reduction_pct": result.reduction_pct,
        "worst_lambda": result.worst_lambda,
        "dp_passed": result.dp_passed,
    }
    return "ok", metrics, outputs


def cmd_optimize_power(config, seed: int, args: argparse.Namespace) -> CommandResult:
    """SCA against full power: power.json, power.csv, objective.csv (+ objective.svg)."""
    out = Path(args.out)
    state = _solved_drop(config, seed, args.drop, power_mode="sca")
    solution, baseline = state["power"], state["baseline"]
    asynchronous = state["mode"] == "async-dac"

    objective_rows: List[list] = []
    series: Dict[str, List[float]] = {}
    if asynchronous:
        seen = set()
        power_rows = []
        for t, sub in enumerate(solution.round_solutions):
            for k in range(solution.powers.shape[1]):
                power_rows.append([t, k, solution.powers[t, k], solution.rates[t, k], baseline.rates[t, k]])
            if id(sub) in seen:
                continue
            seen.add(id(sub))
            objective_rows.extend([t, i, x] for i, x in enumerate(sub.trace))
            series[f"round {t}"] = sub.trace
        iterations = max(s.iterations for s in solution.round_solutions)
        restarted = any(s.restarted for s in solution.round_solutions)
        powers, rates = solution.powers, solution.rates
    else:
        power_rows = [["all", k, p, r, rb] for k, (p, r, rb) in
                      enumerate(zip(solution.allocation.p, solution.rates.r, baseline.rates.r))]
        objective_rows = [["all", i, x] for i, x in enumerate(solution.trace)]
        series["SCA"] = solution.trace
        iterations, restarted = solution.iterations, solution.restarted
        powers, rates = solution.allocation.p, solution.rates.r

    reduction = 100.0 * (1.0 - solution.total_time / baseline.total_time)
    payload = {
        "mode": state["mode"],
        "seed": seed,
        "drop": args.drop,
        "config_hash": state["config_hash"],
        "total_time_s": solution.total_time,
        "full_power_time_s": baseline.total_time,
        "reduction_pct": reduction,
        "fronthaul_time_s": solution.report.fronthaul_time,
        "iterations": iterations,
        "restarted": restarted,
        "powers_w": powers,
        "rates_bps": rates,
        "per_ue_time_s": solution.report.per_ue_time,
    }
    outputs = [
        write_json(out / "power.json", payload),
        write_csv(out / "power.csv", ["round", "ue", "power_w", "rate_bps", "full_power_rate_bps"], power_rows),
        write_csv(out / "objective.csv", ["round", "iteration", "total_time_s"], objective_rows),
    ]
    if "svg" in _formats(args):
        longest = max(len(v) for v in series.values())
        padded = {k: list(v) + [v[-1]] * (longest - len(v)) for k, v in series.items()}
        outputs.append(plot_lines(out / "objective.svg", range(longest), padded,
                                  "SCA iteration", "uplink training time (s)"))
    if not asynchronous:
        formatter.print_ue_table("Power control", ["ue", "power_w", "rate_bps", "full_power_rate_bps"],
                                 [row[1:] for row in power_rows])
    metrics = {
        "total_time_s": solution.total_time,
        "full_power_time_s": baseline.total_time,
        "reduction_pct": reduction,
        "iterations": iterations,
    }
    return "ok", metrics, outputs


def cmd_dp_check(config, seed: int, args: argparse.Namespace, workers: int = 1) -> CommandResult:
    """Ledger at the configured bits, a per-bit-depth table and an optional Monte Carlo check."""
    out = Path(args.out)
    privacy = config.privacy
    state = _solved_drop(config, seed, args.drop)
    report = state["privacy"]
    q = config.quantization

    table = []
    low, high = privacy.bits_range
    for bits in range(low, high + 1):
        at_bits = drop_privacy_report(state, bits)
        verdict = at_bits.verdict
        table.append([bits, aqnm_gain(bits, q.tabulated, q.convention), at_bits.worst_index,
                      verdict.lam, verdict.bound, verdict.tail, verdict.passed])
    certified = [row[0] for row in table if row[6]]

    monte_carlo = None
    if privacy.monte_carlo_samples:
        sensitivities, stds = entity_rounds(state, report.worst_index)
        frequency = monte_carlo_violation(sensitivities, stds, privacy.epsilon,
                                          privacy.monte_carlo_samples, seed, workers)
        monte_carlo = {"samples": privacy.monte_carlo_samples, "frequency": frequency,
                       "bound": report.verdict.bound}

    payload = {
        "mode": state["mode"],
        "chain": report.chain,
        "seed": seed,
        "drop": args.drop,
        "config_hash": state["config_hash"],
        "epsilon": privacy.epsilon,
        "delta": privacy.delta,
        "lambdas": report.lambdas,
        "worst_index": report.worst_index,
        "verdict": dataclasses.asdict(report.verdict),
        "min_certified_bits": min(certified) if certified else None,
        "max_certified_bits": max(certified) if certified else None,
        "monte_carlo": monte_carlo,
    }
    outputs = [
        write_json(out / "dp.json", payload),
        write_csv(out / "dp.csv", ["bits", "gain", "worst_index", "lambda", "bound", "tail", "passed"], table),
    ]
    formatter.print_ue_table("Privacy by bit depth", ["bits", "gain", "worst", "lambda", "bound", "tail", "passed"],
                             table)
    metrics = {"worst_lambda": report.worst_lambda, "bound": report.verdict.bound,
               "passed": bool(report.verdict.passed)}
    if monte_carlo:
        metrics["monte_carlo_frequency"] = monte_carlo["frequency"]
    status = "ok" if report.verdict.passed else f"not certified ({report.verdict.reason})"
    return status, metrics, outputs


def cmd_train(config, seed: int, args: argparse.Namespace) -> CommandResult:
    """Training trace: trace.csv (+ trace.svg)."""
    out = Path(args.out)
    training = config.training
    sys_cfg = config.system
    scenario = prepare_training(config, seed, args.drop)
    beta = scenario.channel.beta

    masks = None
    if training.asynchronous:
        schedule = schedule_rounds(beta, config.schedule.lag_tolerance, config.schedule.lag_percent, sys_cfg.rounds)
        masks = [r.mask for r in schedule]
    powers = scenario.powers
    if training.power_mode == "sca":
        if training.chain == "dac" and masks is not None:
            powers = sca_solve_dac(DacScenario.from_config(beta, dac_zeta(config), masks, sys_cfg),
                                   config.solver).powers
        elif training.chain == "dac":
            full = np.ones(beta.shape, dtype=np.int8)
            powers = sca_solve(PowerScenario.dac(beta, dac_zeta(config), full, sys_cfg), config.solver).allocation.p
        else:
            powers = sca_solve(PowerScenario.adc(beta, adc_gain(config), sys_cfg), config.solver).allocation.p
    scenario = dataclasses.replace(scenario, masks=masks, powers=powers)

    trace = run_training(scenario, sys_cfg.rounds, seed)
    outputs = [write_records_csv(out / "trace.csv", trace.rows, TraceRow)]
    if "svg" in _formats(args):
        outputs.append(plot_trace(out / "trace.svg", trace.rows))

    last = trace.rows[-1]
    metrics = {
        "rounds": last.round,
        "final_loss": last.loss,
        "final_gap": last.gap,
        "final_bound": last.bound,
        "lambda": last.lam,
        "learning_rate": trace.learning_rate,
        "energy_j": float(sum(row.energy_j for row in trace.rows)),
    }
    return "ok", metrics, outputs


def cmd_sweep(config, seed: int, args: argparse.Namespace, workers: int = 1,
              store_path: Optional[str] = None) -> CommandResult:
    """sweep_drops.csv, sweep_summary.csv (+ sweep.svg)."""
    table = run_sweep(config, workers, seed, store_path=store_path, resume=args.resume)
    outputs = emit_results(table, args.out, _formats(args))
    formatter.print_ue_table(
        f"Sweep over {config.sweep.axis}",
        ["value", "ok", "failed", "mean_time_s", "full_power_s", "reduction_pct", "mean_lambda"],
        [[r.value, r.num_ok, r.num_failed, r.mean_time_s, r.mean_full_power_time_s, r.mean_reduction_pct,
          r.mean_lambda] for r in table.summary],
    )
    failed = sum(1 for r in table.rows if r.status != "ok")
    metrics = {"points": len(table.summary), "drops": len(table.rows), "failed_drops": failed}
    return "ok", metrics, outputs


def create_parser() -> argparse.ArgumentParser:
    """Create and configure argument parser."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="Experiment file (default: CFL_CONFIG_PATH or config.yaml)")
    common.add_argument("--seed", type=_seed, help="Root seed (overrides the config file)")
    common.add_argument("--out", type=str, default=OUTPUT_DIR, help="Output directory")
    common.add_argument("--format", choices=["csv", "svg"], default="csv",
                        help="csv writes tables only; svg adds plots")
    common.add_argument("--drops", type=_positive, help="Channel drops per sweep point")
    common.add_argument("--workers", type=_positive, help="Worker processes (sweep) or threads (Monte Carlo)")
    common.add_argument("--store", nargs="?", const=STORE_PATH, default=None,
                        help="Record the run in the SQLite ledger (optional path)")
    common.add_argument("--mode", choices=MODES, help="Uplink mode")
    common.add_argument("--power-mode", dest="power_mode", choices=POWER_MODES, help="Power mode")

    parser = argparse.ArgumentParser(
        prog="cfl-lab",
        description="Cell-free massive MIMO federated learning lab",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    simulate = subparsers.add_parser("simulate", parents=[common], help="Simulate one drop")
    simulate.add_argument("--drop", type=int, default=0, help="Drop index")

    optimize = subparsers.add_parser("optimize-power", parents=[common], help="SCA power control of one drop")
    optimize.add_argument("--drop", type=int, default=0, help="Drop index")

    dp = subparsers.add_parser("dp-check", parents=[common], help="Differential-privacy check of one drop")
    dp.add_argument("--drop", type=int, default=0, help="Drop index")
    dp.add_argument("--epsilon", type=float, help="Privacy budget epsilon")
    dp.add_argument("--delta", type=float, help="Privacy budget delta")
    dp.add_argument("--monte-carlo", dest="monte_carlo", type=int,
                    help="Monte Carlo samples for an empirical violation frequency")

    train = subparsers.add_parser("train", parents=[common], help="Over-the-air training run")
    train.add_argument("--drop", type=int, default=0, help="Drop index")
    train.add_argument("--rounds", type=_positive, help="Training rounds (overrides system.rounds)")

    sweep = subparsers.add_parser("sweep", parents=[common], help="Sweep one configuration axis")
    sweep.add_argument("--resume", action="store_true", help="Reuse drops cached in the store")

    return parser


def _print_error(payload: Dict[str, Any]) -> None:
    print(json.dumps(payload, sort_keys=True, default=str), file=sys.stderr)


def run_command(args: argparse.Namespace) -> int:
    """Dispatch one parsed command; raises LabError or CLIError."""
    if getattr(args, "drop", 0) < 0:
        raise CLIError("--drop must be >= 0")
    config = _apply_overrides(load_experiment_config(args.config), args)
    seed = config.seed if args.seed is None else args.seed
    workers = resolve_workers(args.workers, config)
    store_path = args.store
    if getattr(args, "resume", False) and not store_path:
        store_path = STORE_PATH
    scenario_hash = config_hash(config)

    formatter.start_execution(args.command, scenario_hash, seed)
    save_experiment_config(config, Path(args.out) / "resolved_config.yaml")
    if args.command == "simulate":
        status, metrics, outputs = cmd_simulate(config, seed, args)
    elif args.command == "optimize-power":
        status, metrics, outputs = cmd_optimize_power(config, seed, args)
    elif args.command == "dp-check":
        status, metrics, outputs = cmd_dp_check(config, seed, args, workers)
    elif args.command == "train":
        status, metrics, outputs = cmd_train(config, seed, args)
    elif args.command == "sweep":
        status, metrics, outputs = cmd_sweep(config, seed, args, workers, store_path)
    else:
        raise CLIError(f"unknown command {args.command!r}")

    if store_path:
        record_run_sync(store_path, args.command, scenario_hash, seed, status, plain(metrics))
    formatter.print_final_summary(status, metrics, [str(p) for p in outputs])
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main CLI entry point."""
    parser = create_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return 2

    try:
        return run_command(args)
    except CLIError as e:
        _print_error({"error": "usage", "message": str(e), "details": {}})
        return 2
    except LabError as e:
        _print_error(e.to_dict())
        return 1
    except KeyboardInterrupt:
        _print_error({"error": "interrupted", "message": "Interrupted by user", "details": {}})
        return 130
    except Exception as e:
        _print_error({"error": "internal-error", "message": str(e), "details": {"type": type(e).__name__}})
        if DEBUG:
            import traceback
            traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())

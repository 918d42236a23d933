#!/usr/bin/env python3
"""
Per-drop simulation graph.

One channel drop flows through four stages:

    topology -> schedule -> power -> privacy

Each stage sets ``status`` to the name of the next stage, or to ``failed``
with an error payload; the graph stops on ``completed`` or ``failed``.
The compiled graph is built once per process and reused for every drop.
"""

import logging
from typing import Any, Dict, List, Optional, TypedDict

import numpy as np
from langgraph.graph import END, StateGraph

from data_model import DropResult, ExperimentConfig
from nodes import power_node, privacy_node, schedule_node, topology_node
from nodes.config import drop_hash, validate_mode, validate_power_mode
from sim.errors import InvalidArgumentError
from sim.quantization import fronthaul_load_bits

logger = logging.getLogger(__name__)


class DropState(TypedDict):
    """State that gets passed between the stages of one drop."""
    config: ExperimentConfig
    config_hash: str
    seed: int
    drop: int
    mode: str           # sync-adc, async-dac, sync-dac
    power_mode: str     # sca, full
    status: str         # topology, scheduling, power, privacy, completed, failed
    channel: Any        # ChannelRealization
    masks: List[np.ndarray]
    schedule_trace: List[Any]
    power: Any          # PowerSolution or DacPowerSolution
    baseline: Any
    privacy: Any        # PrivacyReport
    error: Optional[Dict[str, Any]]


def should_continue(state: DropState) -> str:
    """Determine which stage runs next based on the current status."""
    if state["status"] == "scheduling":
        return "schedule"
    elif state["status"] == "power":
        return "power"
    elif state["status"] == "privacy":
        return "privacy"
    else:  # completed or failed
        return END


_ROUTES = {"schedule": "schedule", "power": "power", "privacy": "privacy", END: END}
_graph = None


def build_graph():
    workflow = StateGraph(DropState)
    workflow.add_node("topology", topology_node)
    workflow.add_node("schedule", schedule_node)
    workflow.add_node("power", power_node)
    workflow.add_node("privacy", privacy_node)
    workflow.set_entry_point("topology")
    for stage in ("topology", "schedule", "power", "privacy"):
        workflow.add_conditional_edges(stage, should_continue, _ROUTES)
    return workflow.compile()


def get_graph():
    global _graph
    if _graph is None:
        _graph = build_graph()
    return _graph


def initial_state(config: ExperimentConfig, drop: int, seed: Optional[int] = None,
                  mode: Optional[str] = None, power_mode: Optional[str] = None) -> DropState:
    mode = mode or config.sweep.mode
    power_mode = power_mode or config.sweep.power_mode
    if not validate_mode(mode):
        raise InvalidArgumentError(f"unknown mode {mode!r}", mode=mode)
    if not validate_power_mode(power_mode):
        raise InvalidArgumentError(f"unknown power mode {power_mode!r}", power_mode=power_mode)
    return {
        "config": config,
        "config_hash": drop_hash(config),
        "seed": config.seed if seed is None else seed,
        "drop": drop,
        "mode": mode,
        "power_mode": power_mode,
        "status": "topology",
        "channel": None,
        "masks": [],
        "schedule_trace": [],
        "power": None,
        "baseline": None,
        "privacy": None,
        "error": None,
    }


def simulate_drop(config: ExperimentConfig, drop: int, seed: Optional[int] = None,
                  mode: Optional[str] = None, power_mode: Optional[str] = None) -> DropState:
    """Run the graph for one drop and return its final state."""
    state = initial_state(config, drop, seed, mode, power_mode)
    return get_graph().invoke(state)


def _per_ue(values: np.ndarray) -> List[float]:
    values = np.asarray(values, dtype=float)
    if values.ndim == 2:
        values = values.mean(axis=0)
    return [float(v) for v in values]


def drop_result(state: DropState) -> DropResult:
    """Flatten a final drop state into its results record."""
    result = DropResult(
        drop=state["drop"],
        seed=state["seed"],
        config_hash=state["config_hash"],
        mode=state["mode"],
        power_mode=state["power_mode"],
        status="ok" if state["status"] == "completed" else "failed",
        error=state.get("error"),
    )
    if state["status"] != "completed":
        return result

    config = state["config"]
    solution, baseline, report = state["power"], state["baseline"], state["privacy"]
    result.total_time_s = solution.total_time
    result.full_power_time_s = baseline.total_time
    result.reduction_pct = 100.0 * (1.0 - solution.total_time / baseline.total_time)
    if state["mode"] == "async-dac":
        result.sca_iterations = max(s.iterations for s in solution.round_solutions)
        result.mean_served = float(np.mean([len(r.active) for r in state["schedule_trace"]]))
        result.powers_w = _per_ue(solution.powers)
        result.rates_bps = _per_ue(solution.rates)
    else:
        result.sca_iterations = solution.iterations
        result.mean_served = float(config.system.num_ues)
        result.powers_w = _per_ue(solution.allocation.p)
        result.rates_bps = _per_ue(solution.rates.r)
        result.objective_trace = [float(x) for x in solution.trace]
    result.worst_lambda = report.worst_lambda
    result.dp_bound = report.verdict.bound
    result.dp_passed = report.verdict.passed
    if state["mode"] == "sync-adc":
        result.fronthaul_bits = fronthaul_load_bits(config.quantization.adc_bits, config.system.num_aps,
                                                    config.system.grad_dim)
    return result


def run_drop(config: ExperimentConfig, drop: int, seed: Optional[int] = None,
             mode: Optional[str] = None, power_mode: Optional[str] = None) -> DropResult:
    """One drop through the pipeline, as a results record (never raises on LabError)."""
    result = drop_result(simulate_drop(config, drop, seed, mode, power_mode))
    if not result.ok:
        logger.warning("drop %d failed: %s", drop, (result.error or {}).get("error"))
    return result

"""
Power node: full-power baseline and SCA power control for the drop.
"""

import time
from typing import Any, Dict

import numpy as np

from data_model import ExperimentConfig
from sim.errors import LabError
from sim.power_control import DacScenario, PowerScenario, full_power_baseline, sca_solve, sca_solve_dac
from sim.quantization import aqnm_gain, dac_gains
from .rich_output import formatter


def adc_gain(config: ExperimentConfig) -> float:
    q = config.quantization
    return aqnm_gain(q.adc_bits, q.tabulated, q.convention)


def dac_zeta(config: ExperimentConfig) -> np.ndarray:
    q = config.quantization
    bits = q.dac_bits_per_ue if q.dac_bits_per_ue is not None else q.dac_bits
    return dac_gains(bits, config.system.num_ues, q.tabulated, q.convention)


def power_node(state: Dict[str, Any]) -> Dict[str, Any]:
    """Solve the drop's power control in the configured mode."""
    start_time = time.time()
    config = state["config"]
    beta = state["channel"].beta
    mode = state["mode"]
    use_sca = state["power_mode"] == "sca"

    try:
        if mode == "async-dac":
            scenario = DacScenario.from_config(beta, dac_zeta(config), state["masks"], config.system)
            baseline = sca_solve_dac(scenario, config.solver, baseline=True)
            solution = sca_solve_dac(scenario, config.solver) if use_sca else baseline
            detail = f"{solution.distinct_masks} distinct masks"
        else:
            if mode == "sync-adc":
                scenario = PowerScenario.adc(beta, adc_gain(config), config.system)
            else:
                scenario = PowerScenario.dac(beta, dac_zeta(config), state["masks"][0], config.system)
            baseline = full_power_baseline(scenario)
            solution = sca_solve(scenario, config.solver) if use_sca else baseline
            detail = f"{solution.iterations} SCA iterations" + (", restarted" if solution.restarted else "")
    except LabError as e:
        formatter.log_node_progress("Power", f"Failed: {e.message}")
        return {**state, "status": "failed", "error": e.to_dict()}

    formatter.log_node_progress(
        "Power",
        f"{state['power_mode']}: {solution.total_time:.4g} s vs full power {baseline.total_time:.4g} s ({detail})",
        time.time() - start_time,
    )
    return {**state, "power": solution, "baseline": baseline, "status": "privacy"}

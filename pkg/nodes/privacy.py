"""
Privacy node: DP accounting of the drop at the chosen powers.

The ADC chain reports every UE; the DAC chain reports every AP.
"""

import time
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from sim.channel import draw_small_scale
from sim.errors import LabError
from sim.privacy import (
    DpBudget,
    PrivacyReport,
    effective_noise_std_adc,
    effective_noise_std_dac,
    privacy_report_adc,
    privacy_report_dac,
    sensitivity_adc,
    sensitivity_dac,
)
from sim.quantization import aqnm_gain, dac_gains
from .power import adc_gain, dac_zeta
from .rich_output import formatter


def _channels(state: Dict[str, Any]) -> Optional[Callable[[int], np.ndarray]]:
    """Instantaneous channel of round t, or None for the statistics surrogate."""
    config = state["config"]
    if config.privacy.statistics:
        return None
    beta = state["channel"].beta

    def channels(t):
        g = draw_small_scale(config.system, state["seed"], block=t + 1, drop=state["drop"])
        return np.sqrt(beta) * g
    return channels


def _round_powers(state: Dict[str, Any]) -> np.ndarray:
    solution = state["power"]
    if state["mode"] == "async-dac":
        return solution.powers
    return np.tile(solution.allocation.p, (len(state["masks"]), 1))


def _gains(state: Dict[str, Any], bits: Optional[int]):
    config = state["config"]
    q = config.quantization
    if state["mode"] == "sync-adc":
        return adc_gain(config) if bits is None else aqnm_gain(bits, q.tabulated, q.convention)
    if bits is None:
        return dac_zeta(config)
    return dac_gains(bits, config.system.num_ues, q.tabulated, q.convention)


def drop_privacy_report(state: Dict[str, Any], bits: Optional[int] = None) -> PrivacyReport:
    """Privacy report of a solved drop; bits overrides the converter resolution, powers stay fixed."""
    config = state["config"]
    privacy = config.privacy
    sys_cfg = config.system
    budget = DpBudget(privacy.epsilon, privacy.delta)
    beta = state["channel"].beta
    if state["mode"] == "sync-adc":
        return privacy_report_adc(state["power"].allocation.p, _gains(state, bits), beta,
                                  sys_cfg.noise_power_w, sys_cfg.rounds, budget,
                                  privacy.aggregation, _channels(state))
    return privacy_report_dac(_round_powers(state), beta, _gains(state, bits), state["masks"],
                              sys_cfg.noise_power_w, budget)


def entity_rounds(state: Dict[str, Any], index: int) -> Tuple[List[float], List[float]]:
    """Per-round sensitivities and noise stds of one UE (ADC) or AP (DAC)."""
    config = state["config"]
    sys_cfg = config.system
    beta = state["channel"].beta
    gains = _gains(state, None)
    if state["mode"] == "sync-adc":
        p = state["power"].allocation.p
        m = effective_noise_std_adc(p, gains, beta, sys_cfg.noise_power_w, index)
        channels = _channels(state)
        sensitivities = []
        for t in range(sys_cfg.rounds):
            if channels is None:
                sensitivities.append(sensitivity_adc(p, gains, beta, index, config.privacy.aggregation,
                                                     statistics=True))
            else:
                sensitivities.append(sensitivity_adc(p, gains, channels(t), index, config.privacy.aggregation))
        return sensitivities, [m] * sys_cfg.rounds
    sensitivities, stds = [], []
    for p, mask in zip(_round_powers(state), state["masks"]):
        sensitivities.append(sensitivity_dac(p, beta, mask, index, statistics=True))
        stds.append(effective_noise_std_dac(p, beta, gains, mask, sys_cfg.noise_power_w, index))
    return sensitivities, stds


def privacy_node(state: Dict[str, Any]) -> Dict[str, Any]:
    start_time = time.time()
    try:
        report = drop_privacy_report(state)
    except LabError as e:
        formatter.log_node_progress("Privacy", f"Failed: {e.message}")
        return {**state, "status": "failed", "error": e.to_dict()}

    entity = "UE" if report.chain == "adc" else "AP"
    verdict = "passed" if report.verdict.passed else f"not certified ({report.verdict.reason})"
    formatter.log_node_progress(
        "Privacy",
        f"worst {entity} {report.worst_index}: lambda {report.worst_lambda:.4g}, {verdict}",
        time.time() - start_time,
    )
    return {**state, "privacy": report, "status": "completed"}

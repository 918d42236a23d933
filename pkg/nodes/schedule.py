"""
Schedule node: serving masks per round.

Synchronous modes serve every UE from every AP in every round; the
asynchronous mode replays the lag-tolerant protocol.
"""

import time
from typing import Any, Dict

import numpy as np

from sim.errors import LabError
from sim.scheduler import full_masks, schedule_rounds
from .rich_output import formatter


def schedule_node(state: Dict[str, Any]) -> Dict[str, Any]:
    start_time = time.time()
    config = state["config"]
    channel = state["channel"]
    rounds = config.system.rounds

    if state["mode"] != "async-dac":
        masks = full_masks(channel.num_aps, channel.num_ues, rounds)
        formatter.log_node_progress("Schedule", f"Synchronous: all {channel.num_ues} UEs every round")
        return {**state, "masks": masks, "schedule_trace": [], "status": "power"}

    try:
        trace = schedule_rounds(channel.beta, config.schedule.lag_tolerance,
                                config.schedule.lag_percent, rounds)
    except LabError as e:
        formatter.log_node_progress("Schedule", f"Failed: {e.message}")
        return {**state, "status": "failed", "error": e.to_dict()}

    mean_served = float(np.mean([len(r.active) for r in trace]))
    formatter.log_node_progress(
        "Schedule",
        f"Lag-tolerant: {mean_served:.2f} of {channel.num_ues} UEs served per round",
        time.time() - start_time,
    )
    return {**state, "masks": [r.mask for r in trace], "schedule_trace": trace, "status": "power"}

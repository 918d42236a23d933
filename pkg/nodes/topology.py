"""
Topology node: places APs and UEs and draws the large-scale fading of one drop.
"""

import time
from typing import Any, Dict

from sim.channel import drop_channel
from sim.errors import LabError
from .rich_output import formatter


def topology_node(state: Dict[str, Any]) -> Dict[str, Any]:
    """Channel realization for (seed, drop)."""
    start_time = time.time()
    config = state["config"]
    try:
        channel = drop_channel(config.system, config.channel, state["seed"], state["drop"])
    except LabError as e:
        formatter.log_node_progress("Topology", f"Failed: {e.message}")
        return {**state, "status": "failed", "error": e.to_dict()}

    duration = time.time() - start_time
    formatter.log_node_progress(
        "Topology",
        f"Drop {state['drop']}: {channel.num_aps} APs, {channel.num_ues} UEs placed",
        duration,
    )
    return {**state, "channel": channel, "status": "scheduling"}

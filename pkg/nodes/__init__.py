"""
Nodes package for the per-drop simulation graph.
Contains the stage implementations for the Topology/Schedule/Power/Privacy flow.
"""

from .topology import topology_node
from .schedule import schedule_node
from .power import power_node
from .privacy import privacy_node

__all__ = [
    'topology_node',
    'schedule_node',
    'power_node',
    'privacy_node'
]

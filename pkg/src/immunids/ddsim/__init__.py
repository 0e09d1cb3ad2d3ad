"""Diffusion-routed sensor-network simulator with a cache-poisoning attacker."""

from .cache import EXPLORATORY, REINFORCED, Interest, InterestCache, cache_insert
from .engine import (
    BlockResult,
    NodeCounters,
    Simulation,
    attacker_step,
    propagate_interest,
    publish_data,
    reinforce,
    run,
    standalone_simulation,
)
from .topology import (
    PUBLISHER,
    RELAY,
    SUBSCRIBER,
    Network,
    NetworkNode,
    TopologyError,
    build_topology,
)

__all__ = [
    "EXPLORATORY",
    "REINFORCED",
    "Interest",
    "InterestCache",
    "cache_insert",
    "BlockResult",
    "NodeCounters",
    "Simulation",
    "attacker_step",
    "propagate_interest",
    "publish_data",
    "reinforce",
    "run",
    "standalone_simulation",
    "PUBLISHER",
    "RELAY",
    "SUBSCRIBER",
    "Network",
    "NetworkNode",
    "TopologyError",
    "build_topology",
]

"""Seeded random geometric network layout with publisher/subscriber/relay roles."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..config import ScenarioConfig, derive_seed

PUBLISHER = "publisher"
SUBSCRIBER = "subscriber"
RELAY = "relay"


class TopologyError(ValueError):
    """Raised when a valid connected layout cannot be produced."""


@dataclass
class NetworkNode:
    node_id: int
    kind: str
    malicious: bool
    position: tuple[float, float]
    neighbors: list[int] = field(default_factory=list)


class Network:
    """Static node set with symmetric radio links on the unit square."""

    def __init__(self, nodes: list[NetworkNode], config: ScenarioConfig):
        self.nodes = nodes
        self.config = config
        self.publishers = [n.node_id for n in nodes if n.kind == PUBLISHER]
        self.subscribers = [n.node_id for n in nodes if n.kind == SUBSCRIBER]
        self.relays = [n.node_id for n in nodes if n.kind == RELAY]
        self.malicious = [n.node_id for n in nodes if n.malicious]
        # publisher i announces attribute i
        self.attribute_of = {pub: i for i, pub in enumerate(self.publishers)}

    def __len__(self) -> int:
        return len(self.nodes)

    def node(self, node_id: int) -> NetworkNode:
        return self.nodes[node_id]

    def neighbors(self, node_id: int) -> list[int]:
        return self.nodes[node_id].neighbors

    def hop_distances(self, source: int) -> dict[int, int]:
        """BFS hop counts from `source` to every reachable node."""
        dist = {source: 0}
        frontier = [source]
        while frontier:
            nxt = []
            for u in frontier:
                for v in self.nodes[u].neighbors:
                    if v not in dist:
                        dist[v] = dist[u] + 1
                        nxt.append(v)
            frontier = nxt
        return dist

    def partitioned_honest(self) -> list[int]:
        """Honest nodes with no malicious-free path to any publisher.

        Attackers that stop forwarding cut these nodes off from all data, so
        their starvation is a topology effect rather than evidence about
        their own behavior.
        """
        bad = set(self.malicious)
        seen = set(p for p in self.publishers if p not in bad)
        frontier = list(seen)
        while frontier:
            u = frontier.pop()
            for v in self.nodes[u].neighbors:
                if v not in seen and v not in bad:
                    seen.add(v)
                    frontier.append(v)
        return [n.node_id for n in self.nodes if not n.malicious and n.node_id not in seen]


def _connected(adjacency: list[list[int]]) -> bool:
    n = len(adjacency)
    if n == 0:
        return False
    seen = [False] * n
    seen[0] = True
    stack = [0]
    count = 1
    while stack:
        u = stack.pop()
        for v in adjacency[u]:
            if not seen[v]:
                seen[v] = True
                count += 1
                stack.append(v)
    return count == n


def build_topology(config: ScenarioConfig) -> Network:
    """Place nodes uniformly at random and link within radio range.

    Placement is retried up to `max_placement_attempts` times until the graph
    is connected; ids 0..n_p-1 are publishers, the next n_s are subscribers,
    the rest relays.  The malicious subscriber set is fixed up front from its
    own seeded stream (a static adversary, chosen before any traffic flows).
    """
    config = config.resolved()
    config.validate()
    n = config.n_nodes
    placement_rng = random.Random(derive_seed(config.seed, "placement"))
    adjacency: list[list[int]] | None = None
    positions: list[tuple[float, float]] = []
    r2 = config.radio_range * config.radio_range
    for _ in range(config.max_placement_attempts):
        positions = [(placement_rng.random(), placement_rng.random()) for _ in range(n)]
        candidate: list[list[int]] = [[] for _ in range(n)]
        for i in range(n):
            xi, yi = positions[i]
            for j in range(i + 1, n):
                xj, yj = positions[j]
                dx, dy = xi - xj, yi - yj
                if dx * dx + dy * dy <= r2:
                    candidate[i].append(j)
                    candidate[j].append(i)
        if _connected(candidate):
            adjacency = candidate
            break
    if adjacency is None:
        raise TopologyError(
            f"no connected layout for {n} nodes with radio_range="
            f"{config.radio_range} in {config.max_placement_attempts} attempts"
        )

    selection_rng = random.Random(derive_seed(config.seed, "malicious"))
    subscriber_ids = list(range(config.n_p, config.n_p + config.n_s))
    bad = set(selection_rng.sample(subscriber_ids, config.n_m)) if config.n_m else set()

    nodes = []
    for i in range(n):
        if i < config.n_p:
            kind = PUBLISHER
        elif i < config.n_p + config.n_s:
            kind = SUBSCRIBER
        else:
            kind = RELAY
        nodes.append(
            NetworkNode(
                node_id=i,
                kind=kind,
                malicious=i in bad,
                position=positions[i],
                neighbors=sorted(adjacency[i]),
            )
        )
    return Network(nodes, config)

"""Discrete-event simulation of diffusion routing under spurious-interest flooding.

Control plane: subscribers flood interest batches; every receiving node caches
them (building reverse-path gradients) and re-floods once.  Data plane:
publishers emit full-rate messages that follow reinforced gradients and
periodic exploratory messages that follow every gradient.  Malicious
subscribers, when the attack is enabled, stop subscribing and forwarding and
instead flood batches of fresh-tag spurious interests that crowd legitimate
entries out of the bounded caches.

All messages share per-node FIFO send buffers with a fixed per-message
transmit time, so flooding load shows up as queue growth, per-hop delay, and
buffer-overflow drops.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass, field

from ..config import ScenarioConfig, derive_seed
from .. import events as ev
from .cache import EXPLORATORY, REINFORCED, Interest, InterestCache
from .topology import SUBSCRIBER, Network, build_topology

# heap actions
_ARRIVE_INTEREST = 0
_ARRIVE_DATA = 1
_PUBLISH = 2
_EXPLORE = 3
_REFRESH = 4
_ATTACK = 5
_SAMPLE = 6


@dataclass(slots=True)
class NodeCounters:
    """Per-node tallies for one block; the fast-path input to metric extraction."""

    interest_received: int = 0
    data_received: int = 0
    finals: int = 0
    latency_sum: float = 0.0
    latencies: list = field(default_factory=list)
    hops_sum: int = 0
    hop_delay_sum: float = 0.0
    hop_delay_count: int = 0
    buffer_samples: int = 0
    buffer_long: int = 0
    no_match: int = 0
    overflow: int = 0


@dataclass(slots=True)
class BlockResult:
    """One simulated block: raw events (when recorded) plus per-node counters."""

    index: int
    start: float
    end: float
    events: list | None
    counters: dict


@dataclass(slots=True)
class _InterestMsg:
    flood_id: int
    origin: int
    interests: tuple
    spurious: bool


@dataclass(slots=True)
class _DataMsg:
    msg_id: int
    attribute: int
    created: float
    exploratory: bool


class _NodeState:
    __slots__ = (
        "cache",
        "queue_len",
        "busy_until",
        "seen_floods",
        "seen_data",
        "last_data_sender",
        "corrupted",
    )

    def __init__(self, capacity: int, ttl: float):
        self.cache = InterestCache(capacity, ttl)
        self.queue_len = 0
        self.busy_until = 0.0
        self.seen_floods: set[int] = set()
        self.seen_data: set[int] = set()
        self.last_data_sender: dict[int, int] = {}
        self.corrupted = False


class Simulation:
    """One seeded run over a built network.

    With `schedule=True` all periodic traffic (subscriptions, publishing,
    exploration, attack rounds, buffer sampling) is installed; with False the
    caller drives individual operations and drains the queue, which is how the
    single-operation entry points below work.
    """

    def __init__(self, network: Network, record_events: bool = False, schedule: bool = True):
        self.network = network
        self.config = network.config.resolved()
        self.record = record_events
        self.now = 0.0
        self._heap: list = []
        self._seq = 0
        self.events: list = []
        self.states = [
            _NodeState(self.config.cache_capacity, self.config.interest_ttl)
            for _ in range(len(network))
        ]
        self.counters: dict[int, NodeCounters] = {n: NodeCounters() for n in range(len(network))}
        self._flood_ids = 0
        self._data_ids = 0
        self._spurious_tag = self.config.n_p  # legit attributes are 0..n_p-1
        self._attack_rng = random.Random(derive_seed(self.config.seed, "attack"))
        self.attack_enabled = self.config.n_m > 0 and (
            self.config.mu_m > 0 or self.config.malicious_std > 0
        )
        if self.attack_enabled:
            for m in network.malicious:
                self.states[m].corrupted = True
        self.stats = {
            "interest_sent": 0,
            "interest_overflow": 0,
            "data_sent": 0,
            "data_final": 0,
            "data_no_match": 0,
            "data_overflow": 0,
            "data_in_flight": 0,
            "spurious_originated": 0,
        }
        self.per_attribute: dict[int, dict[str, int]] = {}
        if schedule:
            self._install_schedules()

    # ------------------------------------------------------------------
    # scheduling
    # ------------------------------------------------------------------

    def _push(self, time: float, action: int, data) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (time, self._seq, action, data))

    def _install_schedules(self) -> None:
        cfg = self.config
        net = self.network
        for i, pub in enumerate(net.publishers):
            start = i * cfg.delta_sigma
            self._push(start, _PUBLISH, pub)
            self._push(start + cfg.exploratory_interval / 2.0, _EXPLORE, pub)
        # spread subscriptions over one refresh period so no wave of floods
        # lands in a single block
        stagger = cfg.refresh_interval / max(1, cfg.n_s)
        for j, sub in enumerate(net.subscribers):
            if not self.states[sub].corrupted:
                self._push(j * stagger, _REFRESH, sub)
        if self.attack_enabled:
            for m in net.malicious:
                self._push(0.0, _ATTACK, m)
        self._push(cfg.buffer_sample_interval, _SAMPLE, None)

    # ------------------------------------------------------------------
    # event emission (counters always, SimEvent objects only when recording)
    # ------------------------------------------------------------------

    def _attr_stats(self, attribute: int) -> dict:
        s = self.per_attribute.get(attribute)
        if s is None:
            s = self.per_attribute[attribute] = {
                "sent": 0,
                "final": 0,
                "no_match": 0,
                "overflow": 0,
            }
        return s

    def _record(self, kind: str, node: int, **payload) -> None:
        if self.record:
            self.events.append(ev.SimEvent(time=self.now, kind=kind, node=node, **payload))

    # ------------------------------------------------------------------
    # send buffers
    # ------------------------------------------------------------------

    def _enqueue(self, sender: int) -> float | None:
        """Reserve a buffer slot and return the service-completion time, or None if full."""
        st = self.states[sender]
        if st.queue_len >= self.config.send_buffer_capacity:
            return None
        st.queue_len += 1
        depart = max(self.now, st.busy_until) + self.config.tx_time
        st.busy_until = depart
        return depart

    # ------------------------------------------------------------------
    # interest plane
    # ------------------------------------------------------------------

    def _send_interest_copy(self, sender: int, dest: int, msg: _InterestMsg, hops: int) -> None:
        self.stats["interest_sent"] += 1
        if self.record:
            self._record(
                ev.INTEREST_SENT,
                sender,
                origin=msg.origin,
                hops=hops,
                value=len(msg.interests),
                note="spurious" if msg.spurious else None,
            )
        depart = self._enqueue(sender)
        if depart is None:
            self.stats["interest_overflow"] += 1
            self.counters[sender].overflow += 1
            self._record(ev.DATA_DROPPED_BUFFER_OVERFLOW, sender, note="interest")
            return
        self._push(depart, _ARRIVE_INTEREST, (dest, sender, msg, hops, self.now))

    def originate_interests(self, origin: int, interests: list[Interest], spurious: bool) -> None:
        """Flood one batch of interests from `origin` to the whole network."""
        self._flood_ids += 1
        msg = _InterestMsg(self._flood_ids, origin, tuple(interests), spurious)
        st = self.states[origin]
        st.seen_floods.add(msg.flood_id)
        for interest in interests:
            st.cache.insert(
                Interest(interest.attribute, interest.origin, self.now, interest.spurious)
            )
        for w in self.network.neighbors(origin):
            self._send_interest_copy(origin, w, msg, hops=1)

    def _handle_interest_arrival(self, dest: int, sender: int, msg: _InterestMsg, hops: int, enq_t: float) -> None:
        self.states[sender].queue_len -= 1
        st = self.states[dest]
        self.counters[dest].interest_received += 1
        if self.record:
            self._record(
                ev.INTEREST_RECEIVED,
                dest,
                origin=msg.origin,
                hops=hops,
                value=len(msg.interests),
                note="spurious" if msg.spurious else None,
            )
        if msg.flood_id in st.seen_floods:
            # a later copy of an already-handled flood carries no new state
            return
        st.seen_floods.add(msg.flood_id)
        cache = st.cache
        now = self.now
        for interest in msg.interests:
            cache.insert(Interest(interest.attribute, interest.origin, now, interest.spurious))
            cache.add_gradient((interest.attribute, interest.origin), sender)
        if st.corrupted:
            return
        # inline fan-out: this is the hottest loop in the simulator
        targets = [w for w in self.network.nodes[dest].neighbors if w != sender]
        if not targets:
            return
        if self.record:
            for w in targets:
                self._send_interest_copy(dest, w, msg, hops + 1)
            return
        cfg = self.config
        stats = self.stats
        stats["interest_sent"] += len(targets)
        queue_len = st.queue_len
        busy = st.busy_until
        tx = cfg.tx_time
        capacity = cfg.send_buffer_capacity
        next_hops = hops + 1
        for w in targets:
            if queue_len >= capacity:
                stats["interest_overflow"] += 1
                self.counters[dest].overflow += 1
                continue
            queue_len += 1
            busy = (busy if busy > now else now) + tx
            self._push(busy, _ARRIVE_INTEREST, (w, dest, msg, next_hops, now))
        st.queue_len = queue_len
        st.busy_until = busy

    def _legit_interests(self, subscriber: int) -> list[Interest]:
        return [
            Interest(attribute=a, origin=subscriber, timestamp=self.now)
            for a in range(self.config.n_p)
        ]

    def _do_refresh(self, subscriber: int) -> None:
        self.originate_interests(subscriber, self._legit_interests(subscriber), spurious=False)
        self._push(self.now + self.config.refresh_interval, _REFRESH, subscriber)

    # ------------------------------------------------------------------
    # attack
    # ------------------------------------------------------------------

    def spurious_batch_size(self) -> int:
        """Draw this round's batch size from the truncated normal intensity model."""
        cfg = self.config
        if cfg.malicious_std > 0:
            x = self._attack_rng.gauss(cfg.mu_m, cfg.malicious_std)
        else:
            x = cfg.mu_m
        x = min(max(x, 0.0), 1.0)
        k = int(math.floor(x * cfg.send_buffer_capacity + 0.5))
        return min(max(k, 0), cfg.send_buffer_capacity)

    def _do_attack(self, node: int) -> None:
        k = self.spurious_batch_size()
        if k > 0:
            interests = []
            for _ in range(k):
                tag = self._spurious_tag
                self._spurious_tag += 1
                interests.append(Interest(attribute=tag, origin=node, timestamp=self.now, spurious=True))
            self.stats["spurious_originated"] += k
            self.originate_interests(node, interests, spurious=True)
        self._push(self.now + self.config.attack_interval, _ATTACK, node)

    # ------------------------------------------------------------------
    # reinforcement
    # ------------------------------------------------------------------

    def _set_rate_upstream(self, node: int, attribute: int, origin: int, next_hop: int, rate: int, visited: set) -> None:
        """Set one gradient's rate and walk the change up the delivery path."""
        if node in visited:
            return
        visited.add(node)
        changed = self.states[node].cache.set_gradient_rate(attribute, origin, next_hop, rate)
        if not changed:
            # already at this rate (or no such gradient): the walk has converged
            return
        upstream = self.states[node].last_data_sender.get(attribute)
        if upstream is not None:
            self._set_rate_upstream(upstream, attribute, origin, node, rate, visited)

    def _promote_path(self, deliverer: int, attribute: int, origin: int) -> None:
        self._set_rate_upstream(deliverer, attribute, origin, origin, REINFORCED, set())

    def _demote_duplicate(self, deliverer: int, attribute: int, dest: int) -> None:
        cache = self.states[deliverer].cache
        if not cache.reinforced_toward(attribute, dest):
            return
        for origin in cache.matching_origins(attribute, self.now):
            entry = cache.get((attribute, origin))
            if entry is not None and entry.gradients.get(dest) == REINFORCED:
                self._set_rate_upstream(deliverer, attribute, origin, dest, EXPLORATORY, set())

    def reinforce(self, sink: int, neighbor: int, sign: int) -> None:
        """Sink-side path reinforcement: +1 promotes to full data rate, -1 demotes."""
        if neighbor not in self.network.neighbors(sink):
            raise ValueError(f"node {neighbor} is not a neighbor of {sink}")
        if sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        rate = REINFORCED if sign == 1 else EXPLORATORY
        for attribute in range(self.config.n_p):
            entry = self.states[neighbor].cache.get((attribute, sink))
            if entry is not None and sink in entry.gradients:
                self._set_rate_upstream(neighbor, attribute, sink, sink, rate, set())

    # ------------------------------------------------------------------
    # data plane
    # ------------------------------------------------------------------

    def _next_hops(self, node: int, attribute: int, exploratory: bool, exclude: int | None) -> list[int]:
        cache = self.states[node].cache
        cache.purge_expired(self.now)
        hops = cache.next_hops(attribute, exploratory)
        if exclude is not None or node in hops:
            hops = [w for w in hops if w != exclude and w != node]
        return hops

    def _send_data_copy(self, sender: int, dest: int, msg: _DataMsg, hops: int, fresh_copy: bool) -> None:
        """Route one copy toward `dest`; `fresh_copy` marks a newly created copy."""
        if fresh_copy:
            self.stats["data_sent"] += 1
            self._attr_stats(msg.attribute)["sent"] += 1
            self._record(ev.DATA_SENT, sender, attribute=msg.attribute, hops=hops)
        depart = self._enqueue(sender)
        if depart is None:
            self.stats["data_overflow"] += 1
            self._attr_stats(msg.attribute)["overflow"] += 1
            self.counters[sender].overflow += 1
            self._record(ev.DATA_DROPPED_BUFFER_OVERFLOW, sender, attribute=msg.attribute)
            return
        self.stats["data_in_flight"] += 1
        self._push(depart, _ARRIVE_DATA, (dest, sender, msg, hops, self.now))

    def publish(self, publisher: int, exploratory: bool) -> None:
        """Inject one data message at its publisher and route the initial copies."""
        attribute = self.network.attribute_of[publisher]
        self._data_ids += 1
        msg = _DataMsg(self._data_ids, attribute, self.now, exploratory)
        self.states[publisher].seen_data.add(msg.msg_id)
        hops = self._next_hops(publisher, attribute, exploratory, exclude=None)
        if not hops:
            # the message dies unrouted at its origin; still one created copy
            self.stats["data_sent"] += 1
            self._attr_stats(attribute)["sent"] += 1
            self._record(ev.DATA_SENT, publisher, attribute=attribute, hops=0)
            self.stats["data_no_match"] += 1
            self._attr_stats(attribute)["no_match"] += 1
            self.counters[publisher].no_match += 1
            self._record(ev.DATA_DROPPED_NO_MATCH, publisher, attribute=attribute)
            return
        for w in hops:
            self._send_data_copy(publisher, w, msg, hops=1, fresh_copy=True)

    def _drop_no_match(self, node: int, attribute: int, note: str | None = None) -> None:
        self.stats["data_no_match"] += 1
        self._attr_stats(attribute)["no_match"] += 1
        self.counters[node].no_match += 1
        self._record(ev.DATA_DROPPED_NO_MATCH, node, attribute=attribute, note=note)

    def _handle_data_arrival(self, dest: int, sender: int, msg: _DataMsg, hops: int, enq_t: float) -> None:
        self.states[sender].queue_len -= 1
        self.stats["data_in_flight"] -= 1
        st = self.states[dest]
        c = self.counters[dest]
        delay = self.now - enq_t
        c.hop_delay_sum += delay
        c.hop_delay_count += 1
        self._record(ev.HOP_DELAY_RECORDED, dest, attribute=msg.attribute, delay=delay)
        st.last_data_sender[msg.attribute] = sender

        if msg.msg_id in st.seen_data:
            self._demote_duplicate(sender, msg.attribute, dest)
            self._drop_no_match(dest, msg.attribute, note="duplicate")
            return
        st.seen_data.add(msg.msg_id)

        delivered = st.cache.live((msg.attribute, dest), self.now)
        c.data_received += 1
        if delivered:
            latency = self.now - msg.created
            c.finals += 1
            c.latency_sum += latency
            c.latencies.append(latency)
            c.hops_sum += hops
            self.stats["data_final"] += 1
            self._attr_stats(msg.attribute)["final"] += 1
            self._record(
                ev.DATA_RECEIVED, dest, attribute=msg.attribute,
                hops=hops, latency=latency, final=1,
            )
            self._promote_path(sender, msg.attribute, dest)
        else:
            self._record(
                ev.DATA_RECEIVED, dest, attribute=msg.attribute, hops=hops, final=0,
            )

        onward = self._next_hops(dest, msg.attribute, msg.exploratory, exclude=sender)
        if delivered:
            for w in onward:
                self._send_data_copy(dest, w, msg, hops + 1, fresh_copy=True)
            return
        if not onward:
            had_entries = bool(st.cache.matching_origins(msg.attribute, self.now))
            self._drop_no_match(dest, msg.attribute, note="no-route" if had_entries else None)
            return
        self._send_data_copy(dest, onward[0], msg, hops + 1, fresh_copy=False)
        for w in onward[1:]:
            self._send_data_copy(dest, w, msg, hops + 1, fresh_copy=True)

    # ------------------------------------------------------------------
    # sampling and the main loop
    # ------------------------------------------------------------------

    def _do_sample(self) -> None:
        threshold = self.config.long_buffer_threshold
        for node in range(len(self.network)):
            q = self.states[node].queue_len
            c = self.counters[node]
            c.buffer_samples += 1
            if q > threshold:
                c.buffer_long += 1
            self._record(ev.BUFFER_LENGTH_SAMPLED, node, value=q)
        self._push(self.now + self.config.buffer_sample_interval, _SAMPLE, None)

    def _dispatch(self, action: int, data) -> None:
        if action == _ARRIVE_INTEREST:
            self._handle_interest_arrival(*data)
        elif action == _ARRIVE_DATA:
            self._handle_data_arrival(*data)
        elif action == _PUBLISH:
            self.publish(data, exploratory=False)
            self._push(self.now + self.config.i_p, _PUBLISH, data)
        elif action == _EXPLORE:
            self.publish(data, exploratory=True)
            self._push(self.now + self.config.exploratory_interval, _EXPLORE, data)
        elif action == _REFRESH:
            self._do_refresh(data)
        elif action == _ATTACK:
            self._do_attack(data)
        elif action == _SAMPLE:
            self._do_sample()

    def run_until(self, t: float) -> None:
        """Process every queued action strictly before `t` and advance the clock."""
        heap = self._heap
        while heap and heap[0][0] < t:
            time, _, action, data = heapq.heappop(heap)
            self.now = time
            self._dispatch(action, data)
        self.now = t

    def run_until_idle(self) -> list:
        """Drain all pending work (only valid without periodic schedules)."""
        heap = self._heap
        while heap:
            time, _, action, data = heapq.heappop(heap)
            self.now = time
            self._dispatch(action, data)
        out = self.events
        self.events = []
        return out

    def run_blocks(self):
        """Yield one BlockResult per block until the configured duration."""
        cfg = self.config
        n_blocks = int(round(cfg.duration / cfg.block_length))
        for i in range(n_blocks):
            start = i * cfg.block_length
            end = (i + 1) * cfg.block_length
            self.run_until(end)
            block_events = self.events if self.record else None
            self.events = []
            counters = self.counters
            self.counters = {n: NodeCounters() for n in range(len(self.network))}
            yield BlockResult(index=i, start=start, end=end, events=block_events, counters=counters)

    def eviction_counts(self) -> dict[str, int]:
        legit = sum(st.cache.evicted_legit for st in self.states)
        spurious = sum(st.cache.evicted_spurious for st in self.states)
        expired = sum(st.cache.expired for st in self.states)
        return {"legit": legit, "spurious": spurious, "expired": expired}


# ----------------------------------------------------------------------
# operation-level entry points
# ----------------------------------------------------------------------

def standalone_simulation(network: Network, record: bool = True) -> Simulation:
    """A quiescent simulation for driving individual operations in tests/tools."""
    return Simulation(network, record_events=record, schedule=False)


def propagate_interest(sim: Simulation, interest: Interest) -> list:
    """Flood a single interest from its subscriber origin; returns emitted events."""
    if sim.network.node(interest.origin).kind != SUBSCRIBER:
        raise ValueError(f"interest origin {interest.origin} is not a subscriber")
    sim.originate_interests(interest.origin, [interest], spurious=interest.spurious)
    return sim.run_until_idle()


def publish_data(sim: Simulation, publisher: int, time: float | None = None) -> list:
    """Publish one full-rate data message and drive it to quiescence."""
    node = sim.network.node(publisher)
    if node.kind != "publisher":
        raise ValueError(f"node {publisher} is not a publisher")
    if time is not None:
        cfg = sim.config
        index = sim.network.publishers.index(publisher)
        phase = (time - index * cfg.delta_sigma) / cfg.i_p
        if abs(phase - round(phase)) > 1e-9 or time < index * cfg.delta_sigma - 1e-9:
            raise ValueError(f"time {time} is not on publisher {publisher}'s schedule")
        sim.now = max(sim.now, time)
    sim.publish(publisher, exploratory=False)
    return sim.run_until_idle()


def reinforce(sim: Simulation, sink: int, neighbor: int, sign: int) -> None:
    sim.reinforce(sink, neighbor, sign)


def attacker_step(sim: Simulation, malicious_node: int, round_index: int) -> list:
    """Run one attack round for one malicious node; returns emitted events."""
    if not sim.network.node(malicious_node).malicious:
        raise ValueError(f"node {malicious_node} is not malicious")
    if not sim.attack_enabled:
        raise ValueError("simulation is not in attack mode")
    sim.now = max(sim.now, round_index * sim.config.attack_interval)
    sim._do_attack(malicious_node)
    # drop the self-rescheduled attack action: single-step semantics
    sim._heap = [item for item in sim._heap if item[2] != _ATTACK]
    heapq.heapify(sim._heap)
    return sim.run_until_idle()


def run(config: ScenarioConfig):
    """Run a full scenario, yielding one EventBlock per block (the replay format)."""
    network = build_topology(config)
    sim = Simulation(network, record_events=True, schedule=True)
    for block in sim.run_blocks():
        yield ev.EventBlock(index=block.index, start=block.start, end=block.end, events=block.events)

"""Multi-agent detection engine: negative/clonal selection, danger gating, signaling.

Two agent kinds patrol the network in synchronous rounds.  D agents sit on
monitored (LT) nodes, watch that node's per-block danger pattern and
throughput signature, and activate only when both pathogenic-signature and
danger evidence accumulate inside a sliding round window.  Activated D agents
migrate to the nearest lymph (LN) node and emit pattern messages plus
co-stimulation to co-located T agents.  T agents are born at the marrow (BM)
node, made self-tolerant at the thymus (TM) via negative selection, and
activate at an LN only when enough matching patterns AND enough accumulated
co-stimulation arrive, after which they proliferate with affinity-inverse
mutation.  Every agent ages each round and is reaped at its lifespan.
"""

from __future__ import annotations

import random
import warnings
from dataclasses import dataclass, field
from enum import Enum

from .classify import (
    AmpLabel,
    DetectionModel,
    DmpLabel,
    classify_amp,
    classify_dmp,
)
from .config import AisParams, derive_seed
from .ddsim.topology import Network
from .metrics import Amp, Dmp

TM = "TM"
BM = "BM"
LN = "LN"
LT = "LT"


@dataclass(slots=True)
class RoleAssignment:
    tm: int
    bm: int
    lymph: tuple[int, ...]
    lt: tuple[int, ...]

    def role_of(self, node: int) -> str:
        if node == self.tm:
            return TM
        if node == self.bm:
            return BM
        if node in self.lymph:
            return LN
        return LT


def setup_roles(network: Network, n_lymph: int = 1) -> RoleAssignment:
    """Elect TM, BM, and n_lymph LN hosts deterministically (lowest ids)."""
    if n_lymph < 1:
        raise ValueError("n_lymph must be positive")
    n = len(network)
    if n < 2 + n_lymph:
        raise ValueError(f"network of {n} nodes cannot host 2 + {n_lymph} roles")
    lymph = tuple(range(2, 2 + n_lymph))
    lt = tuple(range(2 + n_lymph, n))
    return RoleAssignment(tm=0, bm=1, lymph=lymph, lt=lt)


# ----------------------------------------------------------------------
# molecular patterns
# ----------------------------------------------------------------------

def random_pattern(rng: random.Random, length: int) -> int:
    return rng.getrandbits(length)


def _mask(length: int) -> int:
    return (1 << length) - 1


def match(detector: int, pattern: int, r: int, length: int) -> bool:
    """True iff the two bit strings agree on at least r contiguous positions."""
    if not 1 <= r <= length:
        raise ValueError(f"r={r} must lie in [1, {length}]")
    agree = ~(detector ^ pattern) & _mask(length)
    # shift-and-AND doubling: after the loop a set bit marks an agree-run >= r
    span = 1
    while span < r and agree:
        step = min(span, r - span)
        agree &= agree >> step
        span += step
    return agree != 0


def longest_agree_run(a: int, b: int, length: int) -> int:
    x = ~(a ^ b) & _mask(length)
    run = 0
    while x:
        x &= x >> 1
        run += 1
    return run


class AmpEncoder:
    """Quantizes a throughput value into a bit pattern of fixed length.

    The value is binned over the fitted [lo, hi] range (clamped at the
    extremes) and the bin index, as a fixed-width binary field, is tiled to
    fill the pattern length.
    """

    def __init__(self, lo: float, hi: float, bins: int, length: int):
        if bins < 1:
            raise ValueError("bins must be positive")
        if hi < lo:
            raise ValueError("fitted range requires hi >= lo")
        self.lo = lo
        self.hi = hi
        self.bins = bins
        self.length = length
        self.width = max(1, (bins - 1).bit_length())

    @classmethod
    def fit(cls, values: list[float], bins: int, length: int) -> "AmpEncoder":
        if not values:
            raise ValueError("cannot fit an encoder on no values")
        return cls(lo=min(values), hi=max(values), bins=bins, length=length)

    def bin_index(self, value: float) -> int:
        if self.hi == self.lo:
            return 0
        idx = int((value - self.lo) / (self.hi - self.lo) * self.bins)
        return min(max(idx, 0), self.bins - 1)

    def encode(self, value: float) -> int:
        index = self.bin_index(value)
        pattern = 0
        filled = 0
        while filled < self.length:
            take = min(self.width, self.length - filled)
            pattern = (pattern << take) | (index >> (self.width - take))
            filled += take
        return pattern


def encode_amp(a: Amp, encoder: AmpEncoder) -> int:
    if encoder is None:
        raise ValueError("AMP encoder is not fitted")
    return encoder.encode(a.data_throughput)


def encoder_from_model(model: DetectionModel) -> AmpEncoder:
    return AmpEncoder(model.encoder_lo, model.encoder_hi, model.encoder_bins, model.pattern_bits)


# ----------------------------------------------------------------------
# agents and signals
# ----------------------------------------------------------------------

class TState(Enum):
    IMMATURE = "immature"
    MATURE = "mature"
    ACTIVATED = "activated"


class DState(Enum):
    INACTIVE = "inactive"
    ACTIVATED = "activated"


@dataclass(slots=True)
class AmpMessage:
    pattern: int
    source: Amp


@dataclass(slots=True)
class CoStimulation:
    # a co-stimulation signal carries nothing but its concentration
    concentration: float

    def __post_init__(self):
        if not 0.0 <= self.concentration <= 1.0:
            raise ValueError("concentration must lie in [0, 1]")


@dataclass(slots=True)
class TAgent:
    agent_id: int
    mp: int
    host: int
    state: TState = TState.IMMATURE
    age: int = 0
    alive: bool = True
    match_rounds: list = field(default_factory=list)
    costim_events: list = field(default_factory=list)   # (round, concentration)
    trigger_pattern: int | None = None
    inbox: list = field(default_factory=list)


@dataclass(slots=True)
class DAgent:
    agent_id: int
    host: int
    state: DState = DState.INACTIVE
    age: int = 0
    alive: bool = True
    amp_rounds: list = field(default_factory=list)
    danger_rounds: list = field(default_factory=list)
    collected_amp: Amp | None = None
    collected_distance: float = 0.0
    danger_score: float = 0.0
    inbox: list = field(default_factory=list)   # receives but ignores signals


@dataclass(slots=True)
class Activation:
    """One agent crossing its activation thresholds in some round."""

    agent_id: int
    node: int
    round_index: int


# ----------------------------------------------------------------------
# operations
# ----------------------------------------------------------------------

def negative_selection(
    candidates: list[TAgent],
    self_patterns: list[int],
    r: int,
    max_attempts: int,
    rng: random.Random,
    length: int,
    warn: bool = True,
) -> list[TAgent]:
    """Censor candidates against the self set, regenerating rejects.

    A candidate matching any self pattern is redrawn up to `max_attempts`
    times; candidates still matching afterwards are dropped and the shortfall
    reported.  Survivors leave in the MATURE state.
    """
    unique_self = sorted(set(self_patterns))
    survivors: list[TAgent] = []
    shortfall = 0
    for agent in candidates:
        ok = False
        for _ in range(max_attempts + 1):
            if not any(match(agent.mp, s, r, length) for s in unique_self):
                ok = True
                break
            agent.mp = random_pattern(rng, length)
        if ok:
            agent.state = TState.MATURE
            survivors.append(agent)
        else:
            shortfall += 1
    if shortfall and warn:
        warnings.warn(f"negative selection dropped {shortfall} candidates after {max_attempts} attempts")
    return survivors


def send_signal(sender, node_agents: list, signal, t: int, p: float, rng: random.Random) -> list:
    """Deliver `signal` to up to t uniformly sampled co-located agents, each w.p. p."""
    pool = [a for a in node_agents if a is not sender]
    k = min(t, len(pool))
    if k <= 0:
        return []
    picks = rng.sample(pool, k)
    return [a for a in picks if rng.random() < p]


def costim_concentration(amp_distance: float, danger_score: float) -> float:
    """Co-stimulation strength: product of pathogenic closeness and danger intensity."""
    if not 0.0 <= amp_distance <= 1.0:
        raise ValueError("amp_distance must lie in [0, 1]")
    if not 0.0 <= danger_score <= 1.0:
        raise ValueError("danger_score must lie in [0, 1]")
    return amp_distance * danger_score


def d_agent_round(
    d: DAgent,
    local_dmp: Dmp,
    local_amps: list[Amp],
    model: DetectionModel,
    params: AisParams,
    round_index: int,
) -> Activation | None:
    """One scan round for an inactive D agent on its monitored node."""
    if d.state is not DState.INACTIVE:
        return None
    label, margin = classify_dmp(model.plane, local_dmp)
    if label is DmpLabel.DANGER:
        d.danger_rounds.append(round_index)
        scale = model.margin_scale if model.margin_scale > 0 else 1.0
        d.danger_score = min(max(margin / scale, 0.0), 1.0)
    for amp in local_amps:
        amp_label, distance = classify_amp(model.amp_reference, amp)
        if amp_label is AmpLabel.PATHOGENIC:
            d.amp_rounds.append(round_index)
            if distance >= d.collected_distance or d.collected_amp is None:
                d.collected_amp = amp
                d.collected_distance = distance
    cutoff = round_index - params.window
    d.amp_rounds[:] = [x for x in d.amp_rounds if x > cutoff]
    d.danger_rounds[:] = [x for x in d.danger_rounds if x > cutoff]
    if len(d.amp_rounds) >= params.theta_amp and len(d.danger_rounds) >= params.theta_danger:
        d.state = DState.ACTIVATED
        return Activation(agent_id=d.agent_id, node=d.host, round_index=round_index)
    return None


def t_agent_round(
    tau: TAgent,
    received: list,
    params: AisParams,
    round_index: int,
) -> Activation | None:
    """Process one round of signals for a mature T agent."""
    if tau.state is not TState.MATURE:
        return None
    for signal in received:
        if isinstance(signal, AmpMessage):
            if match(tau.mp, signal.pattern, params.match_threshold, params.pattern_bits):
                tau.match_rounds.append(round_index)
                tau.trigger_pattern = signal.pattern
        elif isinstance(signal, CoStimulation):
            tau.costim_events.append((round_index, signal.concentration))
    cutoff = round_index - params.window
    tau.match_rounds[:] = [x for x in tau.match_rounds if x > cutoff]
    tau.costim_events[:] = [(rr, c) for rr, c in tau.costim_events if rr > cutoff]
    costim_total = sum(c for _, c in tau.costim_events)
    if len(tau.match_rounds) >= params.theta_match and costim_total >= params.theta_costim:
        tau.state = TState.ACTIVATED
        return Activation(agent_id=tau.agent_id, node=tau.host, round_index=round_index)
    return None


def proliferate(
    tau: TAgent,
    rate: int,
    mutation_max: float,
    rng: random.Random,
    length: int,
    next_id,
    trigger_pattern: int | None = None,
) -> list[TAgent]:
    """Clone an activated T agent with affinity-inverse per-bit mutation.

    Clones are returned highest-affinity-first (the converging selection
    ordering) and enter service MATURE at age 0.
    """
    trigger = trigger_pattern if trigger_pattern is not None else tau.trigger_pattern
    if trigger is None:
        trigger = tau.mp
    affinity = longest_agree_run(tau.mp, trigger, length) / length
    flip_p = mutation_max * (1.0 - affinity)
    clones: list[TAgent] = []
    for _ in range(rate):
        mp = tau.mp
        if flip_p > 0.0:
            for bit in range(length):
                if rng.random() < flip_p:
                    mp ^= 1 << bit
        clones.append(TAgent(agent_id=next_id(), mp=mp, host=tau.host, state=TState.MATURE))
    clones.sort(key=lambda c: -longest_agree_run(c.mp, trigger, length))
    return clones


def age_and_reap(agents: list, lifespan: int) -> list:
    """Advance every agent one round and remove those reaching the lifespan."""
    survivors = []
    for agent in agents:
        agent.age += 1
        if agent.age < lifespan:
            survivors.append(agent)
        else:
            agent.alive = False
    return survivors


# ----------------------------------------------------------------------
# the protocol world
# ----------------------------------------------------------------------

@dataclass(slots=True)
class RoundReport:
    round_index: int
    activated_d: int
    activated_t: int
    total_d: int
    total_t: int
    newly_flagged: tuple[int, ...]
    flagged_total: int

    def to_line(self) -> str:
        flags = ";".join(str(n) for n in self.newly_flagged)
        return (
            f"{self.round_index} {self.activated_d} {self.activated_t} "
            f"{self.total_d} {self.total_t} {self.flagged_total} {flags}"
        )


class World:
    """Synchronous-round protocol state over one network."""

    def __init__(
        self,
        network: Network,
        model: DetectionModel,
        params: AisParams,
        seed: int,
        roles: RoleAssignment | None = None,
    ):
        params.validate()
        self.network = network
        self.model = model
        self.params = params
        self.roles = roles if roles is not None else setup_roles(network, params.n_lymph)
        self.rng = random.Random(derive_seed(seed, "ais"))
        self.encoder = encoder_from_model(model) if model is not None else None
        self.round_index = 0
        self._next_agent_id = 0
        self.lt_d: dict[int, list[DAgent]] = {n: [] for n in self.roles.lt}
        self.ln_agents: dict[int, list] = {n: [] for n in self.roles.lymph}
        self.pending: list = []            # (recipient agent, signal), delivered next round
        self.flagged: set[int] = set()
        self.maturation_shortfall = 0
        # nearest lymph node by hop count, lowest id breaking ties
        self.nearest_ln: dict[int, int] = {}
        distances = {ln: network.hop_distances(ln) for ln in self.roles.lymph}
        for node in range(len(network)):
            best = min(self.roles.lymph, key=lambda ln: (distances[ln].get(node, 10 ** 9), ln))
            self.nearest_ln[node] = best
        self._replenish_d()

    def _new_id(self) -> int:
        self._next_agent_id += 1
        return self._next_agent_id

    def _replenish_d(self) -> None:
        for node in self.roles.lt:
            hosted = self.lt_d[node]
            while len(hosted) < self.params.d_per_node:
                hosted.append(DAgent(agent_id=self._new_id(), host=node))

    def self_patterns(self) -> list[int]:
        return list(self.model.self_patterns)

    def counts(self) -> tuple[int, int, int, int]:
        activated_d = total_d = activated_t = total_t = 0
        for agents in self.lt_d.values():
            for d in agents:
                total_d += 1
                activated_d += d.state is DState.ACTIVATED
        for agents in self.ln_agents.values():
            for agent in agents:
                if isinstance(agent, DAgent):
                    total_d += 1
                    activated_d += agent.state is DState.ACTIVATED
                else:
                    total_t += 1
                    activated_t += agent.state is TState.ACTIVATED
        return activated_d, activated_t, total_d, total_t

    def run_round(self, features: dict[int, tuple[Dmp, Amp]]) -> RoundReport:
        """One synchronous protocol round over the latest block's features."""
        params = self.params
        r = self.round_index

        # deliver last round's signals
        for agent, signal in self.pending:
            if agent.alive:
                agent.inbox.append(signal)
        self.pending = []

        # birth at the marrow node, maturation at the thymus
        newborn = [
            TAgent(agent_id=self._new_id(), mp=random_pattern(self.rng, params.pattern_bits), host=self.roles.bm)
            for _ in range(params.birth_rate)
        ]
        matured = negative_selection(
            newborn, self.model.self_patterns, params.match_threshold,
            params.maturation_attempts, self.rng, params.pattern_bits, warn=False,
        )
        self.maturation_shortfall += len(newborn) - len(matured)
        for agent in matured:
            ln = self.roles.lymph[self.rng.randrange(len(self.roles.lymph))]
            agent.host = ln
            self.ln_agents[ln].append(agent)

        # D scans on monitored nodes; activations migrate to the nearest lymph node
        newly_flagged: list[int] = []
        for node in self.roles.lt:
            feat = features.get(node)
            if feat is None:
                continue
            dmp, amp = feat
            hosted = self.lt_d[node]
            migrating: list[DAgent] = []
            for d in hosted:
                act = d_agent_round(d, dmp, [amp], self.model, params, r)
                if act is not None:
                    if node not in self.flagged:
                        self.flagged.add(node)
                        newly_flagged.append(node)
                    migrating.append(d)
            for d in migrating:
                hosted.remove(d)
                ln = self.nearest_ln[node]
                d.host = ln
                self.ln_agents[ln].append(d)

        # activated D agents signal their lymph-node neighborhood
        for ln in self.roles.lymph:
            pool = self.ln_agents[ln]
            for agent in list(pool):
                if isinstance(agent, DAgent) and agent.state is DState.ACTIVATED:
                    if agent.collected_amp is None:
                        continue
                    concentration = costim_concentration(agent.collected_distance, agent.danger_score)
                    pattern = encode_amp(agent.collected_amp, self.encoder)
                    for recipient in send_signal(
                        agent, pool, AmpMessage(pattern, agent.collected_amp),
                        params.signal_t, params.signal_p, self.rng,
                    ):
                        self.pending.append((recipient, AmpMessage(pattern, agent.collected_amp)))
                    for recipient in send_signal(
                        agent, pool, CoStimulation(concentration),
                        params.signal_t, params.signal_p, self.rng,
                    ):
                        self.pending.append((recipient, CoStimulation(concentration)))

        # T rounds and clonal expansion
        for ln in self.roles.lymph:
            pool = self.ln_agents[ln]
            expansions: list[TAgent] = []
            for agent in pool:
                if isinstance(agent, TAgent):
                    act = t_agent_round(agent, agent.inbox, params, r)
                    agent.inbox = []
                    if act is not None:
                        expansions.append(agent)
            for tau in expansions:
                pool.extend(
                    proliferate(
                        tau, params.proliferation_rate, params.mutation_max,
                        self.rng, params.pattern_bits, self._new_id,
                    )
                )

        # apoptosis everywhere, then restock the monitored nodes
        for node in self.roles.lt:
            self.lt_d[node] = age_and_reap(self.lt_d[node], params.lifespan)
        for ln in self.roles.lymph:
            self.ln_agents[ln] = age_and_reap(self.ln_agents[ln], params.lifespan)
        self._replenish_d()

        activated_d, activated_t, total_d, total_t = self.counts()
        self.round_index += 1
        return RoundReport(
            round_index=r,
            activated_d=activated_d,
            activated_t=activated_t,
            total_d=total_d,
            total_t=total_t,
            newly_flagged=tuple(newly_flagged),
            flagged_total=len(self.flagged),
        )


def protocol_round(world: World, features: dict[int, tuple[Dmp, Amp]]) -> RoundReport:
    """Module-level face of `World.run_round`."""
    return world.run_round(features)

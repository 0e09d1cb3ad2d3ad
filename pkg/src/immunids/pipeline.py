"""End-to-end flows: scenario runs to metric rows, model fitting, coupled detection.

The detection loop advances the network simulation one block at a time and
feeds each monitored node's block features (danger pattern + throughput
signature) to the protocol world as one synchronous round.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, replace

from .ais import AmpEncoder, RoundReport, World
from .classify import (
    AmpReference,
    DetectionModel,
    DmpLabel,
    LabeledSample,
    classify_dmp,
    train,
    training_accuracy,
)
from .config import AisParams, ScenarioConfig
from .ddsim.engine import Simulation
from .ddsim.topology import Network, build_topology
from .metrics import (
    ALL,
    Amp,
    Dmp,
    MetricRow,
    MetricVector,
    extract_amp,
    extract_dmp,
    metrics_from_counters,
)


def scenario_metric_rows(config: ScenarioConfig) -> tuple[Network, list[MetricRow]]:
    """Run a scenario and emit one MetricRow per (block, node) plus ALL rows."""
    network = build_topology(config)
    sim = Simulation(network, record_events=False)
    malicious = set(network.malicious)
    rows: list[MetricRow] = []
    for block in sim.run_blocks():
        for node in range(len(network)):
            counters = [block.counters[node]] if node in block.counters else []
            rows.append(
                MetricRow(
                    block=block.index,
                    node=str(node),
                    malicious=int(node in malicious),
                    vector=metrics_from_counters(counters),
                )
            )
        rows.append(
            MetricRow(
                block=block.index,
                node=ALL,
                malicious=0,
                vector=metrics_from_counters(block.counters.values()),
            )
        )
    return network, rows


# ----------------------------------------------------------------------
# model fitting
# ----------------------------------------------------------------------

def _node_rows(rows: list[MetricRow], warmup_blocks: int) -> list[MetricRow]:
    return [r for r in rows if r.node != ALL and r.block >= warmup_blocks]


def fit_model(
    healthy_rows: list[MetricRow],
    attack_rows: list[MetricRow],
    params: AisParams,
    seed: int = 0,
    regularization: float = 1e-3,
    warmup_blocks: int = 8,
) -> DetectionModel:
    """Fit the detection model from healthy-run and attack-run metric rows.

    Safe danger-pattern samples are all monitored-node blocks of the healthy
    runs; danger samples are the malicious-node blocks of the attack runs.
    The throughput reference, pattern encoder, and self set come from the
    same rows.
    """
    healthy = _node_rows(healthy_rows, warmup_blocks)
    attack = _node_rows(attack_rows, warmup_blocks)
    if not healthy:
        raise ValueError("no healthy training rows after warmup")
    malicious = [r for r in attack if r.malicious]
    if not malicious:
        raise ValueError("attack training rows contain no malicious-node blocks")

    samples = [LabeledSample(extract_dmp(r.vector), DmpLabel.SAFE) for r in healthy]
    samples += [LabeledSample(extract_dmp(r.vector), DmpLabel.DANGER) for r in malicious]
    plane = train(samples, regularization=regularization, seed=seed)
    accuracy = training_accuracy(plane, samples)

    benign_tp = [r.vector.data_throughput for r in healthy]
    malicious_tp = [r.vector.data_throughput for r in malicious]
    reference = AmpReference.fit(benign_tp, malicious_tp)

    positive_margins = [
        m for s in samples if s.label is DmpLabel.DANGER
        for m in [classify_dmp(plane, s.features)[1]] if m > 0
    ]
    margin_scale = statistics.mean(positive_margins) if positive_margins else 1.0

    lo = min(min(benign_tp), min(malicious_tp))
    hi = max(max(benign_tp), max(malicious_tp))
    encoder = AmpEncoder(lo=lo, hi=hi, bins=params.amp_bins, length=params.pattern_bits)
    self_patterns = tuple(sorted({encoder.encode(tp) for tp in benign_tp}))
    return DetectionModel(
        plane=plane,
        amp_reference=reference,
        encoder_lo=lo,
        encoder_hi=hi,
        encoder_bins=params.amp_bins,
        pattern_bits=params.pattern_bits,
        self_patterns=self_patterns,
        margin_scale=margin_scale,
        train_accuracy=accuracy,
    )


# ----------------------------------------------------------------------
# coupled detection
# ----------------------------------------------------------------------

@dataclass(slots=True)
class DetectionResult:
    rounds: list
    flagged: tuple[int, ...]
    honest_lt: tuple[int, ...]
    malicious_lt: tuple[int, ...]
    fp_rate: float
    fn_rate: float
    maturation_shortfall: int
    partitioned_honest: tuple[int, ...] = ()

    def report_lines(self) -> list[str]:
        lines = [
            "# detection report",
            f"monitored_nodes = {len(self.honest_lt) + len(self.malicious_lt)}",
            f"malicious_nodes = {len(self.malicious_lt)}",
            f"flagged = {','.join(str(n) for n in self.flagged)}",
            f"false_positive_rate = {self.fp_rate!r}",
            f"false_negative_rate = {self.fn_rate!r}",
            f"partitioned_honest = {','.join(str(n) for n in self.partitioned_honest)}",
            "# round activated_d activated_t total_d total_t flagged_total flags",
        ]
        lines += [r.to_line() for r in self.rounds]
        return lines


def run_detection(
    config: ScenarioConfig,
    params: AisParams,
    model: DetectionModel,
    rounds: int,
    warmup_rounds: int = 12,
    world_seed: int | None = None,
) -> DetectionResult:
    """Drive the simulation and the protocol in lockstep, one round per block.

    During the warmup rounds the agent populations build up but no node is
    scanned, so subscription ramp-up is never mistaken for an incident.
    """
    config = replace(config.resolved(), duration=rounds * config.block_length)
    network = build_topology(config)
    sim = Simulation(network, record_events=False)
    world = World(
        network, model, params,
        seed=config.seed if world_seed is None else world_seed,
    )
    lt_nodes = set(world.roles.lt)
    reports: list[RoundReport] = []
    for block in sim.run_blocks():
        features: dict[int, tuple[Dmp, Amp]] = {}
        if block.index >= warmup_rounds:
            for node in sorted(lt_nodes):
                counters = [block.counters[node]] if node in block.counters else []
                mv = metrics_from_counters(counters)
                features[node] = (extract_dmp(mv), extract_amp(mv, node))
        reports.append(world.run_round(features))
    malicious = set(network.malicious)
    honest_lt = tuple(n for n in world.roles.lt if n not in malicious)
    malicious_lt = tuple(n for n in world.roles.lt if n in malicious)
    flagged = world.flagged
    fp = sum(1 for n in honest_lt if n in flagged)
    fn = sum(1 for n in malicious_lt if n not in flagged)
    partitioned = tuple(n for n in network.partitioned_honest() if n in set(world.roles.lt)) if sim.attack_enabled else ()
    return DetectionResult(
        rounds=reports,
        flagged=tuple(sorted(flagged)),
        honest_lt=honest_lt,
        malicious_lt=malicious_lt,
        fp_rate=fp / len(honest_lt) if honest_lt else 0.0,
        fn_rate=fn / len(malicious_lt) if malicious_lt else 0.0,
        maturation_shortfall=world.maturation_shortfall,
        partitioned_honest=partitioned,
    )


# ----------------------------------------------------------------------
# sweeps
# ----------------------------------------------------------------------

@dataclass(slots=True)
class SweepPoint:
    n_m: int
    seed: int
    activated_d: float      # mean over the last rounds of the run
    activated_t: float
    fp_rate: float
    fn_rate: float


def _sweep_task(task) -> SweepPoint:
    cfg, params, model, rounds, warmup = task
    result = run_detection(cfg, params, model, rounds=rounds, warmup_rounds=warmup)
    tail = result.rounds[-5:]
    return SweepPoint(
        n_m=cfg.n_m,
        seed=cfg.seed,
        activated_d=statistics.mean(r.activated_d for r in tail),
        activated_t=statistics.mean(r.activated_t for r in tail),
        fp_rate=result.fp_rate,
        fn_rate=result.fn_rate,
    )


def sweep_detections(
    configs: list[ScenarioConfig],
    params: AisParams,
    model: DetectionModel,
    rounds: int,
    warmup_rounds: int = 12,
    workers: int = 1,
) -> list[SweepPoint]:
    """Run many independent detections, optionally across processes.

    Runs share no state, and results are returned in input order, so the
    outcome is identical whatever the schedule.
    """
    tasks = [(cfg, params, model, rounds, warmup_rounds) for cfg in configs]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_task, tasks))
    return [_sweep_task(t) for t in tasks]


# ----------------------------------------------------------------------
# canonical scenarios
# ----------------------------------------------------------------------

def detection_scenario(n_m: int, seed: int, n_monitored: int = 100) -> ScenarioConfig:
    """The standard detection layout: publisher-hosted infrastructure roles and
    a subscriber-only monitored population of `n_monitored` nodes.

    Every monitored node subscribes, so its own interest floods guarantee
    gradient coverage; a slightly denser radio range keeps honest pockets
    from being walled off behind non-forwarding attackers.
    """
    n = n_monitored + 3
    radio = 1.4 * math.sqrt(math.log(n + 1.0) / (math.pi * n))
    return ScenarioConfig(
        n_p=3,
        n_s=n_monitored,
        n_r=0,
        n_m=n_m,
        mu_m=0.5,
        seed=seed,
        cache_capacity=1024,
        tx_time=0.002,
        radio_range=radio,
        exploratory_interval=0.5,
        duration=30.0,
    )


def train_model_for(
    seed: int,
    params: AisParams,
    n_m: int = 15,
    n_monitored: int = 100,
    blocks: int = 24,
    warmup_blocks: int = 10,
) -> DetectionModel:
    """Fit a model from one healthy and one attack run of the standard layout."""
    healthy_cfg = replace(detection_scenario(0, seed, n_monitored), duration=float(blocks))
    attack_cfg = replace(detection_scenario(n_m, seed + 1, n_monitored), duration=float(blocks))
    _, healthy_rows = scenario_metric_rows(healthy_cfg)
    _, attack_rows = scenario_metric_rows(attack_cfg)
    return fit_model(healthy_rows, attack_rows, params, seed=seed, warmup_blocks=warmup_blocks)

"""Per-block performance metrics and the danger/antigen feature projections."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from . import events as ev
from .ddsim.engine import NodeCounters

ALL = "ALL"

METRIC_NAMES = (
    "response_time",
    "one_hop_delay",
    "data_throughput",
    "interest_throughput",
    "passed_hops",
    "delay_probability",
    "long_buffer_probability",
    "data_drop_rate",
    "buffer_drop_rate",
)


@dataclass(slots=True)
class MetricVector:
    """The nine per-block performance metrics for one node scope.

    Counts are per block; probabilities lie in [0, 1]; means over empty sets
    are 0 so every block yields a total vector.
    """

    response_time: float = 0.0
    one_hop_delay: float = 0.0
    data_throughput: float = 0.0
    interest_throughput: float = 0.0
    passed_hops: float = 0.0
    delay_probability: float = 0.0
    long_buffer_probability: float = 0.0
    data_drop_rate: float = 0.0
    buffer_drop_rate: float = 0.0

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, name) for name in METRIC_NAMES)


@dataclass(slots=True)
class Dmp:
    """Danger pattern: the three corruption-sensitive metrics."""

    interest_throughput: float
    long_buffer_probability: float
    one_hop_delay: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.interest_throughput, self.long_buffer_probability, self.one_hop_delay)


@dataclass(slots=True)
class Amp:
    """Antigenic pattern: one node's per-block data throughput signature."""

    data_throughput: float
    node: int


def extract_dmp(mv: MetricVector) -> Dmp:
    return Dmp(
        interest_throughput=mv.interest_throughput,
        long_buffer_probability=mv.long_buffer_probability,
        one_hop_delay=mv.one_hop_delay,
    )


def extract_amp(mv: MetricVector, node: int) -> Amp:
    return Amp(data_throughput=mv.data_throughput, node=node)


def _from_tallies(
    finals: int,
    latency_sum: float,
    latencies: list,
    hops_sum: int,
    hop_delay_sum: float,
    hop_delay_count: int,
    data_received: int,
    interest_received: int,
    buffer_samples: int,
    buffer_long: int,
    no_match: int,
    overflow: int,
) -> MetricVector:
    mv = MetricVector()
    mv.data_throughput = float(data_received)
    mv.interest_throughput = float(interest_received)
    mv.data_drop_rate = float(no_match)
    mv.buffer_drop_rate = float(overflow)
    if hop_delay_count:
        mv.one_hop_delay = hop_delay_sum / hop_delay_count
    if finals:
        mv.response_time = latency_sum / finals
        mv.passed_hops = hops_sum / finals
    if finals >= 2:
        mean = latency_sum / finals
        mv.delay_probability = sum(1 for x in latencies if x > mean) / finals
    if buffer_samples:
        mv.long_buffer_probability = buffer_long / buffer_samples
    return mv


def metrics_from_counters(counters: Iterable[NodeCounters]) -> MetricVector:
    """Aggregate engine tallies (one or many nodes) into a MetricVector."""
    finals = 0
    latency_sum = 0.0
    latencies: list = []
    hops_sum = 0
    hop_delay_sum = 0.0
    hop_delay_count = 0
    data_received = 0
    interest_received = 0
    buffer_samples = 0
    buffer_long = 0
    no_match = 0
    overflow = 0
    for c in counters:
        finals += c.finals
        latency_sum += c.latency_sum
        latencies.extend(c.latencies)
        hops_sum += c.hops_sum
        hop_delay_sum += c.hop_delay_sum
        hop_delay_count += c.hop_delay_count
        data_received += c.data_received
        interest_received += c.interest_received
        buffer_samples += c.buffer_samples
        buffer_long += c.buffer_long
        no_match += c.no_match
        overflow += c.overflow
    return _from_tallies(
        finals, latency_sum, latencies, hops_sum, hop_delay_sum, hop_delay_count,
        data_received, interest_received, buffer_samples, buffer_long, no_match, overflow,
    )


def compute_block_metrics(
    block: ev.EventBlock,
    node_scope=ALL,
    long_buffer_threshold: int = 16,
) -> MetricVector:
    """Compute the nine metrics from one block's event stream.

    `node_scope` is ALL, a node id, or a collection of node ids.  Events
    outside the block window are rejected.
    """
    if node_scope is ALL or node_scope == ALL:
        keep = None
    elif isinstance(node_scope, int):
        keep = {node_scope}
    else:
        keep = set(node_scope)

    finals = 0
    latency_sum = 0.0
    latencies: list = []
    hops_sum = 0
    hop_delay_sum = 0.0
    hop_delay_count = 0
    data_received = 0
    interest_received = 0
    buffer_samples = 0
    buffer_long = 0
    no_match = 0
    overflow = 0

    for event in block.events:
        if not (block.start <= event.time < block.end):
            raise ValueError(
                f"event at t={event.time} outside block [{block.start}, {block.end})"
            )
        if keep is not None and event.node not in keep:
            continue
        kind = event.kind
        if kind == ev.INTEREST_RECEIVED:
            interest_received += 1
        elif kind == ev.DATA_RECEIVED:
            data_received += 1
            if event.final:
                finals += 1
                latency_sum += event.latency
                latencies.append(event.latency)
                hops_sum += event.hops
        elif kind == ev.HOP_DELAY_RECORDED:
            hop_delay_sum += event.delay
            hop_delay_count += 1
        elif kind == ev.BUFFER_LENGTH_SAMPLED:
            buffer_samples += 1
            if event.value > long_buffer_threshold:
                buffer_long += 1
        elif kind == ev.DATA_DROPPED_NO_MATCH:
            no_match += 1
        elif kind == ev.DATA_DROPPED_BUFFER_OVERFLOW:
            overflow += 1
    return _from_tallies(
        finals, latency_sum, latencies, hops_sum, hop_delay_sum, hop_delay_count,
        data_received, interest_received, buffer_samples, buffer_long, no_match, overflow,
    )


# ----------------------------------------------------------------------
# CSV interchange: one row per (block, node scope)
# ----------------------------------------------------------------------

CSV_HEADER = ("block", "node", "malicious") + METRIC_NAMES


@dataclass(slots=True)
class MetricRow:
    block: int
    node: str           # node id as text, or "ALL"
    malicious: int      # 1 for malicious-node scopes, 0 otherwise
    vector: MetricVector


def write_metrics_csv(path: str | Path, rows: Iterable[MetricRow]) -> int:
    n = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow(
                [row.block, row.node, row.malicious] + [repr(v) for v in row.vector.as_tuple()]
            )
            n += 1
    return n


def read_metrics_csv(path: str | Path) -> list[MetricRow]:
    rows: list[MetricRow] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected metrics CSV header: {header}")
        for rec in reader:
            vec = MetricVector(**{name: float(x) for name, x in zip(METRIC_NAMES, rec[3:])})
            rows.append(MetricRow(block=int(rec[0]), node=rec[1], malicious=int(rec[2]), vector=vec))
    return rows

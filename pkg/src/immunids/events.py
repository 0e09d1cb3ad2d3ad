"""Simulation event records, block partitioning, and the line-delimited log format."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

INTEREST_SENT = "InterestSent"
INTEREST_RECEIVED = "InterestReceived"
DATA_SENT = "DataSent"
DATA_RECEIVED = "DataReceived"
DATA_DROPPED_NO_MATCH = "DataDroppedNoMatch"
DATA_DROPPED_BUFFER_OVERFLOW = "DataDroppedBufferOverflow"
HOP_DELAY_RECORDED = "HopDelayRecorded"
BUFFER_LENGTH_SAMPLED = "BufferLengthSampled"

EVENT_KINDS = (
    INTEREST_SENT,
    INTEREST_RECEIVED,
    DATA_SENT,
    DATA_RECEIVED,
    DATA_DROPPED_NO_MATCH,
    DATA_DROPPED_BUFFER_OVERFLOW,
    HOP_DELAY_RECORDED,
    BUFFER_LENGTH_SAMPLED,
)

# payload slots that may be absent, with their parsers
_PAYLOAD_FIELDS = (
    ("attribute", int),
    ("origin", int),
    ("hops", int),
    ("delay", float),
    ("latency", float),
    ("value", int),
    ("final", int),
    ("note", str),
)


@dataclass(slots=True)
class SimEvent:
    """One timestamped simulation event at one node.

    Unused payload slots stay None; which slots are set depends on `kind`
    (hop counts for receives, delays for hop records, queue length for
    buffer samples, and so on).
    """

    time: float
    kind: str
    node: int
    attribute: int | None = None
    origin: int | None = None
    hops: int | None = None
    delay: float | None = None
    latency: float | None = None
    value: int | None = None
    final: int | None = None
    note: str | None = None

    def to_line(self) -> str:
        parts = [repr(self.time), self.kind, str(self.node)]
        for name, _ in _PAYLOAD_FIELDS:
            v = getattr(self, name)
            if v is not None:
                parts.append(f"{name}={v!r}" if isinstance(v, float) else f"{name}={v}")
        return " ".join(parts)


def event_from_line(line: str) -> SimEvent:
    parts = line.split()
    if len(parts) < 3:
        raise ValueError(f"malformed event line: {line!r}")
    ev = SimEvent(time=float(parts[0]), kind=parts[1], node=int(parts[2]))
    if ev.kind not in EVENT_KINDS:
        raise ValueError(f"unknown event kind {ev.kind!r}")
    parsers = dict(_PAYLOAD_FIELDS)
    for token in parts[3:]:
        name, _, raw = token.partition("=")
        if name not in parsers:
            raise ValueError(f"unknown payload field {name!r} in line {line!r}")
        setattr(ev, name, parsers[name](raw))
    return ev


@dataclass(slots=True)
class EventBlock:
    """All events inside one fixed window [start, end) of simulated time."""

    index: int
    start: float
    end: float
    events: list

    def __iter__(self) -> Iterator[SimEvent]:
        return iter(self.events)


def write_event_log(path: str | Path, blocks: Iterable[EventBlock]) -> int:
    """Persist blocks one event per line, with block boundary markers."""
    n = 0
    with open(path, "w") as fh:
        for block in blocks:
            fh.write(f"# block {block.index} start={block.start!r} end={block.end!r}\n")
            for ev in block.events:
                fh.write(ev.to_line() + "\n")
                n += 1
    return n


def read_event_log(path: str | Path) -> list[EventBlock]:
    blocks: list[EventBlock] = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line.split()
                # "# block <i> start=<t> end=<t>"
                idx = int(parts[2])
                start = float(parts[3].split("=", 1)[1])
                end = float(parts[4].split("=", 1)[1])
                blocks.append(EventBlock(index=idx, start=start, end=end, events=[]))
            else:
                if not blocks:
                    raise ValueError("event line before any block header")
                blocks[-1].events.append(event_from_line(line))
    return blocks

import pytest

from immunids import events as ev
from immunids.config import ScenarioConfig
from immunids.ddsim import run
from immunids.events import EventBlock, SimEvent, event_from_line, read_event_log, write_event_log
from immunids.metrics import ALL, compute_block_metrics


def test_event_line_round_trip():
    cases = [
        SimEvent(0.125, ev.INTEREST_RECEIVED, 4, origin=2, hops=3, value=2, note="spurious"),
        SimEvent(1.0, ev.DATA_RECEIVED, 7, attribute=1, hops=4, latency=0.25, final=1),
        SimEvent(2.5, ev.BUFFER_LENGTH_SAMPLED, 0, value=17),
        SimEvent(0.0009765625, ev.HOP_DELAY_RECORDED, 3, attribute=0, delay=0.0009765625),
    ]
    for event in cases:
        back = event_from_line(event.to_line())
        assert back == event


def test_float_payloads_survive_exactly():
    event = SimEvent(0.1 + 0.2, ev.HOP_DELAY_RECORDED, 1, delay=1 / 3)
    back = event_from_line(event.to_line())
    assert back.time == event.time
    assert back.delay == event.delay


def test_unknown_kind_and_field_rejected():
    with pytest.raises(ValueError):
        event_from_line("1.0 BogusKind 3")
    with pytest.raises(ValueError):
        event_from_line("1.0 DataSent 3 zorp=1")
    with pytest.raises(ValueError):
        event_from_line("1.0")


def test_event_log_round_trip(tmp_path):
    cfg = ScenarioConfig(n_p=2, n_s=4, n_r=5, n_m=1, mu_m=0.5, duration=5.0, seed=77)
    blocks = list(run(cfg))
    path = tmp_path / "events.log"
    n = write_event_log(path, blocks)
    assert n == sum(len(b.events) for b in blocks)
    back = read_event_log(path)
    assert len(back) == len(blocks)
    for original, loaded in zip(blocks, back):
        assert loaded.index == original.index
        assert loaded.start == original.start and loaded.end == original.end
        assert loaded.events == original.events


def test_replayed_log_yields_identical_metrics(tmp_path):
    cfg = ScenarioConfig(n_p=2, n_s=4, n_r=5, n_m=1, mu_m=0.5, duration=5.0, seed=78)
    blocks = list(run(cfg))
    path = tmp_path / "events.log"
    write_event_log(path, blocks)
    for original, loaded in zip(blocks, read_event_log(path)):
        a = compute_block_metrics(original, node_scope=ALL)
        b = compute_block_metrics(loaded, node_scope=ALL)
        assert a.as_tuple() == b.as_tuple()


def test_events_are_time_ordered_within_blocks():
    cfg = ScenarioConfig(n_p=2, n_s=4, n_r=5, n_m=1, mu_m=0.5, duration=5.0, seed=79)
    for block in run(cfg):
        times = [e.time for e in block.events]
        assert times == sorted(times)

from pathlib import Path

from sharedcache.delivery import deliver_distinct, parse_trace, to_trace
from sharedcache.online import format_trace, parse_trace as parse_demand_trace

GOLDEN = Path(__file__).parent / "data" / "example1.trace"


def test_transmission_trace_golden(ex1):
    _, pl, a = ex1
    text = to_trace(deliver_distinct(pl, a, (1, 2, 3, 4)))
    assert text == GOLDEN.read_text()


def test_transmission_trace_round_trip(ex1):
    _, pl, a = ex1
    log = deliver_distinct(pl, a, (1, 2, 3, 4))
    records = parse_trace(to_trace(log))
    assert len(records) == len(log)
    for rec, t in zip(records, log):
        assert rec["components"] == t.components
        assert rec["subset"] == t.subset and rec["length"] == t.length


def test_demand_trace_round_trip():
    slots = [([], (2, 3, 4, 5)), ([(6, 5)], (6, 2, 3, 4)), ([7, (8, 2)], (7, 8, 3, 4))]
    assert parse_demand_trace(format_trace(slots)) == slots


def test_demand_trace_comments_and_errors():
    import pytest
    assert parse_demand_trace("# header\n- | 1, 2  # first slot\n") == [([], (1, 2))]
    with pytest.raises(ValueError, match="line 1"):
        parse_demand_trace("1 2 3\n")

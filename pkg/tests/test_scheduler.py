import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from loopbench.errors import DuplicateEventId, InvalidInterval, SchedulingInPast
from loopbench.scheduler import Event, Scheduler, WallClock, event_log_csv, periodic

from oracles import fifo_replay


def run(events):
    sched = Scheduler()
    sched.schedule_all(Event(eid, occ, dur) for eid, occ, dur in events)
    return sched.run_until()


def as_tuples(log):
    return [(r.event.id, r.start_time, r.end_time, r.jitter) for r in log]


def test_single_event():
    (rec,) = run([("a", 10, 5)])
    assert (rec.start_time, rec.end_time, rec.jitter) == (10, 15, 0)


def test_tie_is_fifo():
    log = run([("e1", 0, 5), ("e2", 0, 3)])
    assert [r.event.id for r in log] == ["e1", "e2"]
    assert (log[1].start_time, log[1].jitter) == (5, 5)


def test_backlog():
    log = run([("e1", 0, 5), ("e2", 2, 1), ("e3", 3, 1)])
    assert [r.start_time for r in log] == [0, 5, 6]
    assert [r.jitter for r in log] == [0, 3, 3]


def test_insertion_order_does_not_beat_occurrence():
    log = run([("late", 7, 1), ("early", 2, 1)])
    assert [r.event.id for r in log] == ["early", "late"]


def test_empty_run_until():
    sched = Scheduler()
    assert sched.run_until(100) == []
    assert sched.now == 100


def test_run_until_partial():
    sched = Scheduler()
    sched.schedule(Event("a", 10, 5))
    sched.schedule(Event("b", 30, 5))
    (rec,) = sched.run_until(20)
    assert (rec.start_time, rec.end_time) == (10, 15)
    assert sched.now == 20 and len(sched) == 1
    (rec,) = sched.run_until(math.inf)
    assert rec.event.id == "b" and sched.now == 35


def test_pending_event_waits_for_busy_server():
    sched = Scheduler()
    sched.schedule(Event("long", 0, 100))
    sched.run_until(10)
    sched.schedule(Event("next", 20, 1))
    (rec,) = sched.run_until()
    assert rec.start_time == 100 and rec.jitter == 80


def test_scheduling_in_past():
    sched = Scheduler()
    sched.run_until(50)
    with pytest.raises(SchedulingInPast):
        sched.schedule(Event("a", 49, 1))


def test_duplicate_id():
    sched = Scheduler()
    sched.schedule(Event("a", 0, 1))
    with pytest.raises(DuplicateEventId):
        sched.schedule(Event("a", 5, 1))


def test_negative_duration():
    with pytest.raises(ValueError):
        Event("a", 0, -1)


def test_follow_up_runs_before_queue():
    sched = Scheduler()
    sched.schedule(Event("m0", 0, 10))
    sched.schedule(Event("m1", 5, 10))

    def handler(rec):
        if rec.event.id == "m0":
            return Event("s0", 0, 3)
        return None

    log = sched.run_until(handler=handler)
    assert as_tuples(log) == [("m0", 0, 10, 0), ("s0", 10, 13, 0), ("m1", 13, 23, 8)]


def test_handler_may_schedule():
    sched = Scheduler()
    sched.schedule(Event("a", 0, 2))
    seen = []

    def handler(rec):
        seen.append(rec.event.id)
        if rec.event.id == "a":
            sched.schedule(Event("b", 4, 1))

    sched.run_until(handler=handler)
    assert seen == ["a", "b"]


class TestPeriodic:
    def test_small(self):
        assert [e.occurrence_time for e in periodic(10, 3)] == [0, 10, 20]

    def test_empty(self):
        assert periodic(1, 0) == []

    def test_time_driven_scale(self):
        events = periodic(1_250_000, 100)
        assert events[-1].occurrence_time == 123_750_000

    def test_zero_interval(self):
        with pytest.raises(InvalidInterval):
            periodic(0, 3)


def test_ten_random_events_match_replay():
    rng = random.Random(2024)
    events = [(f"e{i}", rng.randrange(0, 50), rng.randrange(0, 10)) for i in range(10)]
    assert as_tuples(run(events)) == fifo_replay(events)


event_sets = st.lists(st.tuples(st.integers(0, 10_000), st.integers(0, 500)), max_size=300).map(
    lambda xs: [(i, occ, dur) for i, (occ, dur) in enumerate(xs)]
)


@settings(max_examples=200)
@given(event_sets)
def test_properties_against_replay(events):
    log = run(events)
    assert as_tuples(log) == fifo_replay(events)
    assert all(r.jitter >= 0 for r in log)
    assert all(b.start_time >= a.end_time for a, b in zip(log, log[1:]))
    assert as_tuples(run(events)) == as_tuples(log)


def test_event_log_csv():
    text = event_log_csv(run([("a", 0, 5), ("b", 0, 3)]))
    assert text.splitlines() == [
        "event_id,occurrence_us,start_us,end_us,jitter_us,payload_kind",
        "a,0,0,5,0,",
        "b,0,5,8,5,",
    ]


def test_wall_clock_mode():
    clock = WallClock(time_scale=0.001)
    sched = Scheduler(clock)
    sched.schedule(Event("a", 0, 1000))
    sched.schedule(Event("b", 50_000, 1000))
    log = sched.run_until()
    assert [r.event.id for r in log] == ["a", "b"]
    assert log[1].start_time >= 50_000
    assert all(r.end_time == r.start_time + 1000 for r in log)
    assert clock.now >= log[-1].end_time

"""Virtual-clock engine with a single-server FIFO event queue.

Events arrive at their occurrence time and are served one at a time in
occurrence order, ties broken by insertion order. An event that arrives
while the server is busy waits; the wait is its jitter.
"""

from __future__ import annotations

import csv
import heapq
import io
import itertools
import math
import time
from dataclasses import dataclass, replace
from typing import Any, Callable, Iterable, Optional

from .errors import DuplicateEventId, InvalidInterval, SchedulingInPast


@dataclass(frozen=True)
class Event:
    id: Any
    occurrence_time: int  # us
    duration: int = 0  # us
    payload: Any = None
    # "hard" / "soft" label only; no deadline semantics attached
    time_condition: Optional[str] = None

    def __post_init__(self):
        if self.duration < 0:
            raise ValueError(f"event {self.id!r}: negative duration {self.duration}")
        if self.time_condition not in (None, "hard", "soft"):
            raise ValueError(f"bad time_condition {self.time_condition!r}")


@dataclass(frozen=True)
class ScheduledEvent:
    event: Event
    start_time: int
    end_time: int

    @property
    def jitter(self) -> int:
        return self.start_time - self.event.occurrence_time

    @property
    def payload_kind(self) -> str:
        payload = self.event.payload
        if payload is None:
            return ""
        return getattr(payload, "kind", type(payload).__name__)


class VirtualClock:
    mode = "virtual"

    def __init__(self, start: int = 0):
        self.now = start

    def advance_to(self, t) -> None:
        if t < self.now:
            raise ValueError(f"clock cannot move backwards ({t} < {self.now})")
        self.now = t

    def wait_until(self, t) -> None:
        self.advance_to(t)


class WallClock:
    """Real-time clock reporting microseconds since :meth:`start`.

    The clock reads 0 until started, so a run can be laid out before time
    begins to flow; :meth:`Scheduler.run_until` starts it. ``time_scale``
    compresses time: with 0.01, one virtual second passes in 10 ms of real
    time. Timestamps are reported in virtual microseconds.
    """

    mode = "wall"

    def __init__(self, time_scale: float = 1.0):
        if time_scale <= 0:
            raise ValueError("time_scale must be positive")
        self.time_scale = time_scale
        self._origin = None
        self._floor = 0

    def start(self) -> None:
        if self._origin is None:
            self._origin = time.perf_counter()

    @property
    def now(self) -> int:
        if self._origin is None:
            return 0
        elapsed = (time.perf_counter() - self._origin) / self.time_scale
        self._floor = max(self._floor, int(elapsed * 1_000_000))
        return self._floor

    def advance_to(self, t) -> None:
        self.wait_until(t)

    def wait_until(self, t) -> None:
        self.start()
        delay = (t - self.now) / 1_000_000 * self.time_scale
        if delay > 0:
            time.sleep(delay)


Handler = Callable[[ScheduledEvent], Optional[Event]]


class Scheduler:
    """Single-owner event queue. Not safe for concurrent use."""

    def __init__(self, clock=None):
        self.clock = clock if clock is not None else VirtualClock()
        self._queue: list = []
        self._seq = itertools.count()
        self._ids: set = set()
        self._server_free_at = self.clock.now
        self.log: list[ScheduledEvent] = []

    @property
    def now(self) -> int:
        return self.clock.now

    def __len__(self):
        return len(self._queue)

    def schedule(self, event: Event) -> int:
        """Enqueue ``event``; returns its insertion sequence number."""
        if event.occurrence_time < self.clock.now:
            raise SchedulingInPast(
                f"event {event.id!r} occurs at {event.occurrence_time} < now {self.clock.now}"
            )
        if event.id in self._ids:
            raise DuplicateEventId(f"event id {event.id!r} already scheduled")
        self._ids.add(event.id)
        seq = next(self._seq)
        heapq.heappush(self._queue, (event.occurrence_time, seq, event))
        return seq

    def schedule_all(self, events: Iterable[Event]) -> None:
        for event in events:
            self.schedule(event)

    def _next_start(self):
        occurrence = self._queue[0][0]
        start = max(occurrence, self._server_free_at)
        if self.clock.mode == "wall":
            start = max(start, self.clock.now)
        return start

    def run_until(self, t=math.inf, handler: Optional[Handler] = None) -> list[ScheduledEvent]:
        """Execute every queued event whose start time is at or before ``t``.

        ``handler`` is called once per event at its start time. It may
        schedule further events, or return an :class:`Event` as a follow-up:
        a follow-up occurs at the end of the current event and is served
        immediately after it, ahead of anything waiting in the queue.

        Returns the events executed by this call. With ``t = inf`` the queue
        is drained and the clock is left at the later of its current value
        and the last end time.
        """
        if t < self.clock.now:
            raise ValueError(f"run_until({t}) is before now ({self.clock.now})")
        executed: list[ScheduledEvent] = []
        while self._queue:
            start = self._next_start()
            if start > t:
                break
            _, _, event = heapq.heappop(self._queue)
            while event is not None:
                start = self._dispatch_time(start)
                record = ScheduledEvent(event, start, start + event.duration)
                self._server_free_at = record.end_time
                follow_up = handler(record) if handler is not None else None
                executed.append(record)
                event = None
                if follow_up is not None:
                    if follow_up.id in self._ids:
                        raise DuplicateEventId(f"event id {follow_up.id!r} already scheduled")
                    self._ids.add(follow_up.id)
                    event = replace(follow_up, occurrence_time=record.end_time)
                    start = record.end_time
        if math.isinf(t):
            final = max(self.clock.now, self._server_free_at)
        else:
            final = t
        self.clock.advance_to(final)
        self.log.extend(executed)
        return executed

    def _dispatch_time(self, start: int) -> int:
        self.clock.wait_until(start)
        if self.clock.mode == "wall":
            start = max(start, self.clock.now)
        return start


def periodic(interval: int, count: int, payload=None, prefix: str = "tick") -> list[Event]:
    """Events at occurrence times 0, interval, ..., (count - 1) * interval."""
    if interval <= 0:
        raise InvalidInterval(f"interval must be > 0, got {interval}")
    if count < 0:
        raise ValueError("count must be >= 0")
    return [Event(f"{prefix}-{k}", k * interval, 0, payload) for k in range(count)]


def event_log_csv(log: Iterable[ScheduledEvent]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["event_id", "occurrence_us", "start_us", "end_us", "jitter_us", "payload_kind"])
    for rec in log:
        writer.writerow(
            [rec.event.id, rec.event.occurrence_time, rec.start_time, rec.end_time,
             rec.jitter, rec.payload_kind]
        )
    return buf.getvalue()

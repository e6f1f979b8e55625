"""Sensor and actuator state machines for the two control-loop strategies.

A step is one measure+check of the next trace value (``measure_us``) and,
when the strategy decides to send, one framework round trip (``send_us``).
Time-driven sends every value; event-driven sends only values at or above
the limit. Both sample at the same interval.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field
from typing import Optional

from .cloud import OrchestrationRequest, ServiceDescriptor
from .core import Limit, Temperature, ValueTrace, as_limit, should_trigger
from .errors import TraceExhausted
from .scheduler import Event, ScheduledEvent, Scheduler

# Solved from 100 * (c + s) = 125 s and 100 * c + 50 * s = 114 s.
MEASURE_US = 1_030_000
SEND_US = 220_000

TIME_DRIVEN = "time_driven"
EVENT_DRIVEN = "event_driven"
STRATEGY_ALIASES = {"time": TIME_DRIVEN, "event": EVENT_DRIVEN,
                    TIME_DRIVEN: TIME_DRIVEN, EVENT_DRIVEN: EVENT_DRIVEN}


@dataclass(frozen=True)
class StepTiming:
    measure_us: int = MEASURE_US
    send_us: int = SEND_US

    def __post_init__(self):
        if self.measure_us <= 0 or self.send_us < 0:
            raise ValueError("measure_us must be > 0 and send_us >= 0")

    def run_duration_us(self, measurements: int, sends: int) -> int:
        return measurements * self.measure_us + sends * self.send_us


DEFAULT_TIMING = StepTiming()


@dataclass(frozen=True)
class Strategy:
    kind: str
    interval: int = MEASURE_US  # us between nominal measurement times
    limit: Optional[Limit] = None

    def __post_init__(self):
        kind = STRATEGY_ALIASES.get(self.kind)
        if kind is None:
            raise ValueError(f"unknown strategy {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if self.interval <= 0:
            raise ValueError("interval must be > 0")
        if kind == EVENT_DRIVEN:
            if self.limit is None:
                raise ValueError("event-driven strategy needs a limit")
            object.__setattr__(self, "limit", as_limit(self.limit))
        elif self.limit is not None:
            raise ValueError("time-driven strategy takes no limit")

    @classmethod
    def time_driven(cls, interval: int = MEASURE_US) -> "Strategy":
        return cls(TIME_DRIVEN, interval)

    @classmethod
    def event_driven(cls, limit=25.0, interval: int = MEASURE_US) -> "Strategy":
        return cls(EVENT_DRIVEN, interval, as_limit(limit))

    @property
    def short(self) -> str:
        return "time" if self.kind == TIME_DRIVEN else "event"


@dataclass(frozen=True)
class StepActions:
    measured: bool
    sent: bool
    value: Temperature

    def __post_init__(self):
        if self.sent and not self.measured:
            raise ValueError("cannot send without measuring")


@dataclass
class SensorState:
    trace: ValueTrace
    strategy: Strategy
    cursor: int = 0
    send_count: int = 0
    measure_count: int = 0

    def _read(self) -> Temperature:
        if self.cursor >= len(self.trace):
            raise TraceExhausted(f"trace of length {len(self.trace)} exhausted")
        value = self.trace[self.cursor]
        self.cursor += 1
        self.measure_count += 1
        return value

    @property
    def local_only_steps(self) -> int:
        return self.measure_count - self.send_count


def sensor_step_time_driven(state: SensorState) -> StepActions:
    value = state._read()
    state.send_count += 1
    return StepActions(True, True, value)


def sensor_step_event_driven(state: SensorState) -> StepActions:
    value = state._read()
    sent = should_trigger(value, state.strategy.limit)
    if sent:
        state.send_count += 1
    return StepActions(True, sent, value)


def sensor_step(state: SensorState) -> StepActions:
    if state.strategy.kind == TIME_DRIVEN:
        return sensor_step_time_driven(state)
    return sensor_step_event_driven(state)


class Actuation(enum.Enum):
    ACTIVATE = "activate"
    NOOP = "noop"


@dataclass
class ActuatorState:
    limit: Limit = field(default_factory=Limit)
    active: bool = False
    activation_log: list = field(default_factory=list)  # (timestamp_us, Temperature)
    received: list = field(default_factory=list)  # (timestamp_us, Temperature)

    def __post_init__(self):
        self.limit = as_limit(self.limit)


def actuator_receive(state: ActuatorState, value, t: int) -> Actuation:
    """Decide whether the air conditioning has to act on ``value``."""
    value = Temperature(value)
    state.received.append((t, value))
    if should_trigger(value, state.limit):
        if state.activation_log and t <= state.activation_log[-1][0]:
            raise ValueError(f"activation at {t} not after {state.activation_log[-1][0]}")
        state.activation_log.append((t, value))
        state.active = True
        return Actuation.ACTIVATE
    state.active = False
    return Actuation.NOOP


class ActuatorNode:
    """Binds an :class:`ActuatorState` to a clock for message delivery."""

    def __init__(self, limit=25.0, clock=None):
        self.state = ActuatorState(as_limit(limit))
        self.clock = clock

    def __call__(self, value, request_id=None) -> dict:
        t = self.clock.now if self.clock is not None else 0
        decision = actuator_receive(self.state, value, t)
        return {"decision": decision.value, "timestamp_us": t}


@dataclass(frozen=True)
class Measure:
    step: int
    kind: str = "measure"


@dataclass(frozen=True)
class Send:
    step: int
    value: float
    kind: str = "send"


@dataclass(frozen=True)
class StepRecord:
    step: int
    value: float
    sent: bool
    activated: Optional[bool]  # None when nothing reached the actuator
    timestamp_us: int


@dataclass
class DeviceRunLog:
    strategy: Strategy
    steps: list = field(default_factory=list)
    events: list = field(default_factory=list)  # ScheduledEvent
    orchestrations: int = 0
    activations: list = field(default_factory=list)  # (timestamp_us, value)
    sensor: Optional[SensorState] = None

    @property
    def duration_us(self) -> int:
        return max((e.end_time for e in self.events), default=0)

    @property
    def send_count(self) -> int:
        return sum(1 for s in self.steps if s.sent)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["step", "value", "sent", "activated", "timestamp_us"])
        for s in self.steps:
            activated = "" if s.activated is None else int(s.activated)
            writer.writerow([s.step, repr(float(s.value)), int(s.sent), activated, s.timestamp_us])
        return buf.getvalue()


def run_loop(
    strategy: Strategy,
    trace: ValueTrace,
    scheduler: Scheduler,
    cloud,
    sensor_name: str = "sensor-1",
    timing: StepTiming = DEFAULT_TIMING,
) -> DeviceRunLog:
    """Drive one complete control-loop run through ``scheduler`` and ``cloud``.

    One measurement event per trace value is scheduled at the strategy's
    interval; a sending step adds a round-trip event as a follow-up served
    right behind its measurement. The sensor decides when its measurement event executes and
    the value is orchestrated when the send event executes. ``cloud`` is a
    :class:`~loopbench.cloud.LocalCloud` or anything with the same
    ``orchestrate`` method. Local-cloud errors propagate and abort the run.
    """
    sensor = SensorState(trace, strategy)
    log = DeviceRunLog(strategy, sensor=sensor)
    origin = scheduler.now
    pending: dict[int, StepRecord] = {}

    for k in range(len(trace)):
        occurrence = origin + k * strategy.interval
        scheduler.schedule(Event(f"measure-{k}", occurrence, timing.measure_us, Measure(k), "soft"))

    def handle(rec: ScheduledEvent):
        payload = rec.event.payload
        if isinstance(payload, Measure):
            actions = sensor_step(sensor)
            step = StepRecord(payload.step, float(actions.value), actions.sent, None, rec.start_time)
            if not actions.sent:
                log.steps.append(step)
                return None
            pending[payload.step] = step
            # follow-up: the round trip runs right behind its own measurement
            return Event(f"send-{payload.step}", rec.end_time, timing.send_us,
                         Send(payload.step, float(actions.value)))
        if isinstance(payload, Send):
            step = pending.pop(payload.step)
            req = OrchestrationRequest(sensor_name, payload.value, f"{strategy.short}-{payload.step}")
            log.orchestrations += 1
            resp = cloud.orchestrate(req)
            ack = resp.delivery or {}
            activated = ack.get("decision") == "activate" if ack else None
            if activated:
                log.activations.append((ack.get("timestamp_us", rec.start_time), payload.value))
            log.steps.append(StepRecord(step.step, step.value, True, activated, step.timestamp_us))
        return None

    log.events = scheduler.run_until(handler=handle)
    return log


def onboard(cloud, sensor_name="sensor-1", actuator_name="actuator-1",
            sensor_endpoint="sim://sensor-1", actuator_endpoint="sim://actuator-1",
            allow: bool = True) -> None:
    """Register the sensor and actuator and install the sensor->actuator rule."""
    cloud.register_service(ServiceDescriptor(sensor_name, "sensor", sensor_endpoint))
    cloud.register_service(ServiceDescriptor(actuator_name, "actuator", actuator_endpoint))
    if allow:
        cloud.set_rule(sensor_name, actuator_name, True)

"""Emulated per-component power measurement and energy accounting.

Power is piecewise constant: every component sits at its idle draw and adds
a delta while an activity window is open. Two activities exist:

* ``measure`` windows add each component's ``measure_delta_mW``;
* ``send`` windows add each component's ``tx_delta_mW`` and
  ``framework_processing_delta_mW``.

With the default model only the sensor has a measure delta, the sensor and
actuator have a transmit delta and only the framework has a processing delta.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .core import US_PER_S, ComponentId, Energy, PowerSample, integrate_energy
from .devices import DEFAULT_TIMING, StepTiming
from .errors import CalibrationError, ConfigError, InvalidInterval
from .scheduler import ScheduledEvent

DEFAULT_SAMPLE_INTERVAL_US = 100_000

DEFAULT_COMPONENTS = (
    ComponentId("sensor-1", "sensor"),
    ComponentId("actuator-1", "actuator"),
    ComponentId("framework", "framework"),
)

ACTIVITY_FIELDS = {
    "measure": ("measure_delta_mW",),
    "send": ("tx_delta_mW", "framework_processing_delta_mW"),
}


@dataclass(frozen=True)
class ComponentPower:
    idle_mW: float
    measure_delta_mW: float = 0.0
    tx_delta_mW: float = 0.0
    framework_processing_delta_mW: float = 0.0

    def __post_init__(self):
        if self.idle_mW <= 0:
            raise ValueError(f"idle_mW must be > 0, got {self.idle_mW}")
        for name in ("measure_delta_mW", "tx_delta_mW", "framework_processing_delta_mW"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def delta(self, activity: str) -> float:
        return sum(getattr(self, f) for f in ACTIVITY_FIELDS.get(activity, ()))

    def scaled(self, k: float) -> "ComponentPower":
        return ComponentPower(self.idle_mW * k, self.measure_delta_mW * k,
                              self.tx_delta_mW * k, self.framework_processing_delta_mW * k)


@dataclass(frozen=True)
class PowerModel:
    sensor: ComponentPower
    actuator: ComponentPower
    framework: ComponentPower
    measure_s: float = DEFAULT_TIMING.measure_us / US_PER_S
    send_roundtrip_s: float = DEFAULT_TIMING.send_us / US_PER_S

    def for_kind(self, kind: str) -> ComponentPower:
        return getattr(self, kind)

    @property
    def timing(self) -> StepTiming:
        return StepTiming(round(self.measure_s * US_PER_S), round(self.send_roundtrip_s * US_PER_S))

    def scaled(self, k: float) -> "PowerModel":
        return replace(self, sensor=self.sensor.scaled(k), actuator=self.actuator.scaled(k),
                       framework=self.framework.scaled(k))

    def with_zero_deltas(self) -> "PowerModel":
        return replace(self, **{
            kind: ComponentPower(self.for_kind(kind).idle_mW) for kind in ("sensor", "actuator", "framework")
        })

    def to_text(self) -> str:
        lines = [f"measure_s = {self.measure_s!r}", f"send_roundtrip_s = {self.send_roundtrip_s!r}"]
        for kind in ("sensor", "actuator", "framework"):
            cp = self.for_kind(kind)
            for name in ("idle_mW", "measure_delta_mW", "tx_delta_mW", "framework_processing_delta_mW"):
                lines.append(f"{kind}.{name} = {float(getattr(cp, name))!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, base: Optional["PowerModel"] = None) -> "PowerModel":
        """Parse ``key = value`` lines; missing keys fall back to ``base``."""
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"bad power model: {exc}") from exc
        base = base or calibrate_default_model()
        top = {}
        for key in ("measure_s", "send_roundtrip_s"):
            if key in data:
                top[key] = float(data.pop(key))
        parts = {}
        for kind in ("sensor", "actuator", "framework"):
            section = data.pop(kind, {})
            if not isinstance(section, dict):
                raise ConfigError(f"{kind} must be a group of keys")
            try:
                parts[kind] = replace(base.for_kind(kind), **{k: float(v) for k, v in section.items()})
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{kind}: {exc}") from exc
        if data:
            raise ConfigError(f"unknown power model keys: {sorted(data)}")
        return replace(base, **parts, **top)

    @classmethod
    def from_file(cls, path) -> "PowerModel":
        return cls.from_text(Path(path).read_text())


@dataclass(frozen=True)
class EnergyReport:
    component: ComponentId
    run_index: int
    energy: Energy
    duration: int  # us

    def scaled(self, k: float) -> "EnergyReport":
        return replace(self, energy=Energy(self.energy.amount * k))


@dataclass
class PowerTrace:
    """Sampled power of one component; iterates as :class:`PowerSample`."""

    component: ComponentId
    timestamps_us: np.ndarray
    power_mW: np.ndarray

    def __len__(self):
        return len(self.timestamps_us)

    def __iter__(self):
        for t, p in zip(self.timestamps_us.tolist(), self.power_mW.tolist()):
            yield PowerSample(self.component, t, p)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["component", "timestamp_us", "power_mW"])
        name = self.component.name
        for t, p in zip(self.timestamps_us.tolist(), self.power_mW.tolist()):
            writer.writerow([name, t, repr(p)])
        return buf.getvalue()


def _run_duration(event_log: Sequence[ScheduledEvent], duration_us: Optional[int]) -> int:
    if duration_us is not None:
        return duration_us
    return max((rec.end_time for rec in event_log), default=0)


def _check_ordered(event_log: Sequence[ScheduledEvent]) -> None:
    starts = [rec.start_time for rec in event_log]
    if any(b < a for a, b in zip(starts, starts[1:])):
        raise ValueError("event log must be ordered by start time")


def sample_run(
    event_log: Sequence[ScheduledEvent],
    model: PowerModel,
    interval: int = DEFAULT_SAMPLE_INTERVAL_US,
    components: Sequence[ComponentId] = DEFAULT_COMPONENTS,
    duration_us: Optional[int] = None,
) -> dict[ComponentId, PowerTrace]:
    """Emulate a PMD sampling every component at exact multiples of ``interval``.

    A sample at instant ``t`` reads idle plus the deltas of every activity
    window ``[start, end)`` containing ``t``. Activities shorter than the
    sampling interval can fall between samples; :func:`account_energy`
    never misses them.
    """
    if interval <= 0:
        raise InvalidInterval(f"sampling interval must be > 0, got {interval}")
    _check_ordered(event_log)
    duration = _run_duration(event_log, duration_us)
    times = np.arange(0, duration + 1, interval, dtype=np.int64)

    # per activity kind: +1 at window start, -1 at window end, as a step function
    open_windows = {}
    for activity in ACTIVITY_FIELDS:
        recs = [r for r in event_log if r.payload_kind == activity and r.end_time > r.start_time]
        starts = np.sort(np.fromiter((r.start_time for r in recs), dtype=np.int64, count=len(recs)))
        ends = np.sort(np.fromiter((r.end_time for r in recs), dtype=np.int64, count=len(recs)))
        open_windows[activity] = (
            np.searchsorted(starts, times, side="right") - np.searchsorted(ends, times, side="right")
        )

    traces = {}
    for comp in components:
        cp = model.for_kind(comp.kind)
        power = np.full(times.shape, cp.idle_mW, dtype=float)
        for activity, count in open_windows.items():
            delta = cp.delta(activity)
            if delta:
                power += delta * count
        traces[comp] = PowerTrace(comp, times, power)
    return traces


def account_energy(
    event_log: Sequence[ScheduledEvent],
    model: PowerModel,
    components: Sequence[ComponentId] = DEFAULT_COMPONENTS,
    run_index: int = 0,
    duration_us: Optional[int] = None,
) -> dict[ComponentId, EnergyReport]:
    """Exact energy per component: idle x duration + sum(delta x window length)."""
    _check_ordered(event_log)
    duration = _run_duration(event_log, duration_us)
    busy_us = {activity: 0 for activity in ACTIVITY_FIELDS}
    for rec in event_log:
        if rec.payload_kind in busy_us:
            busy_us[rec.payload_kind] += rec.end_time - rec.start_time
    reports = {}
    for comp in components:
        cp = model.for_kind(comp.kind)
        mws = cp.idle_mW * duration / US_PER_S
        mws += sum(cp.delta(a) * us / US_PER_S for a, us in busy_us.items())
        reports[comp] = EnergyReport(comp, run_index, Energy(mws), duration)
    return reports


def sampled_energy(traces: Mapping[ComponentId, PowerTrace]) -> dict[ComponentId, Energy]:
    return {comp: integrate_energy(trace) for comp, trace in traces.items()}


def total_energy(reports: Iterable[EnergyReport]) -> float:
    return sum(r.energy.amount for r in reports)


# -- calibration ------------------------------------------------------------


def closed_form_total(model: PowerModel, duration_us: int, measurements: int, sends: int) -> float:
    """Grand total energy (mWs) of a run, straight from counts and durations."""
    timing = model.timing
    total = 0.0
    for kind in ("sensor", "actuator", "framework"):
        cp = model.for_kind(kind)
        total += cp.idle_mW * duration_us / US_PER_S
        total += cp.delta("measure") * measurements * timing.measure_us / US_PER_S
        total += cp.delta("send") * sends * timing.send_us / US_PER_S
    return total


def predicted_ratio(
    model: PowerModel,
    measurements: int = 100,
    time_sends: int = 100,
    event_sends: int = 50,
    time_duration_us: Optional[int] = None,
    event_duration_us: Optional[int] = None,
) -> float:
    """Event-driven over time-driven grand total energy."""
    timing = model.timing
    if time_duration_us is None:
        time_duration_us = timing.run_duration_us(measurements, time_sends)
    if event_duration_us is None:
        event_duration_us = timing.run_duration_us(measurements, event_sends)
    return (closed_form_total(model, event_duration_us, measurements, event_sends)
            / closed_form_total(model, time_duration_us, measurements, time_sends))


DEFAULT_IDLE_MW = 2000.0
DEFAULT_MEASURE_DELTA_MW = 2400.0
DEFAULT_TARGET_RATIO = 0.93
# shares of the solved send delta: sensor tx, actuator tx, framework processing
DEFAULT_SEND_SPLIT = (1 / 3, 1 / 3, 1 / 3)


def calibrate_model(
    target_ratio: float = DEFAULT_TARGET_RATIO,
    idle_mW: float = DEFAULT_IDLE_MW,
    measure_delta_mW: float = DEFAULT_MEASURE_DELTA_MW,
    timing: StepTiming = DEFAULT_TIMING,
    measurements: int = 100,
    time_sends: int = 100,
    event_sends: int = 50,
    send_split: Sequence[float] = DEFAULT_SEND_SPLIT,
) -> PowerModel:
    """Solve for the total send delta that makes event/time energy hit ``target_ratio``.

    All three components idle at ``idle_mW`` (the free scale) and the sensor
    adds ``measure_delta_mW`` while measuring. Only the send delta is
    unknown, and the ratio condition is linear in it::

        fixed(T_e) + D * s * n_e = r * (fixed(T_t) + D * s * n_t)

    where ``fixed(T) = 3 * idle * T + measure_delta * c * measurements``.
    """
    if len(send_split) != 3 or any(w < 0 for w in send_split) or sum(send_split) <= 0:
        raise CalibrationError(f"bad send split {send_split!r}")
    c = timing.measure_us / US_PER_S
    s = timing.send_us / US_PER_S
    t_time = timing.run_duration_us(measurements, time_sends) / US_PER_S
    t_event = timing.run_duration_us(measurements, event_sends) / US_PER_S
    fixed_time = 3 * idle_mW * t_time + measure_delta_mW * c * measurements
    fixed_event = 3 * idle_mW * t_event + measure_delta_mW * c * measurements
    denominator = s * (event_sends - target_ratio * time_sends)
    if denominator == 0:
        raise CalibrationError("ratio does not depend on the send delta")
    send_delta = (target_ratio * fixed_time - fixed_event) / denominator
    if not send_delta >= 0:
        raise CalibrationError(
            f"ratio {target_ratio} needs a negative send delta ({send_delta:.3f} mW); "
            "raise measure_delta_mW or lower the target"
        )
    weights = [w / sum(send_split) for w in send_split]
    return PowerModel(
        sensor=ComponentPower(idle_mW, measure_delta_mW, tx_delta_mW=send_delta * weights[0]),
        actuator=ComponentPower(idle_mW, tx_delta_mW=send_delta * weights[1]),
        framework=ComponentPower(idle_mW, framework_processing_delta_mW=send_delta * weights[2]),
        measure_s=c,
        send_roundtrip_s=s,
    )


def calibrate_default_model() -> PowerModel:
    """The package default: 7 % less energy for event-driven on the 50/50 trace."""
    return calibrate_model()

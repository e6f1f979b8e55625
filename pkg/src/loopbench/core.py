"""Shared domain types, trace generation, the trigger predicate and energy math.

Units throughout the package: degrees Celsius, milliwatts (mW),
milliwatt-seconds (mWs) and integer microseconds (us) since run start.
"""

from __future__ import annotations

import csv
import io
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidSampleStream, InvalidTraceLength

TEMPERATURE_MIN = -50.0
TEMPERATURE_MAX = 100.0
DEFAULT_LIMIT = 25.0
US_PER_S = 1_000_000

COMPONENT_KINDS = ("sensor", "actuator", "framework")
TRACE_DISTRIBUTIONS = ("uniform", "regular")


class Temperature(float):
    """A finite temperature in degrees Celsius within [-50, 100]."""

    def __new__(cls, value):
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"temperature must be finite, got {value!r}")
        if not TEMPERATURE_MIN <= value <= TEMPERATURE_MAX:
            raise ValueError(
                f"temperature {value} outside [{TEMPERATURE_MIN}, {TEMPERATURE_MAX}]"
            )
        return super().__new__(cls, value)

    def __repr__(self):
        return f"Temperature({float(self)!r})"


@dataclass(frozen=True)
class Limit:
    threshold: Temperature = Temperature(DEFAULT_LIMIT)

    def __post_init__(self):
        object.__setattr__(self, "threshold", Temperature(self.threshold))

    def __float__(self):
        return float(self.threshold)


def as_limit(limit) -> Limit:
    return limit if isinstance(limit, Limit) else Limit(limit)


@dataclass(frozen=True)
class ComponentId:
    name: str
    kind: str

    def __post_init__(self):
        if self.kind not in COMPONENT_KINDS:
            raise ValueError(f"unknown component kind {self.kind!r}")
        if not self.name:
            raise ValueError("component name must be non-empty")


@dataclass(frozen=True)
class Energy:
    """An amount of energy in mWs."""

    amount: float

    def __post_init__(self):
        if not self.amount >= 0.0:
            raise ValueError(f"energy must be non-negative, got {self.amount!r}")

    def __float__(self):
        return float(self.amount)

    def __add__(self, other):
        return Energy(self.amount + float(other))


@dataclass(frozen=True)
class PowerSample:
    component: ComponentId
    timestamp: int  # us
    power: float  # mW


def should_trigger(value, limit) -> bool:
    """True iff ``value`` has reached or exceeded ``limit``."""
    return float(value) >= float(limit)


@dataclass(frozen=True)
class ValueTrace:
    values: tuple = ()
    limit: Limit = field(default_factory=Limit)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(Temperature(v) for v in self.values))
        object.__setattr__(self, "limit", as_limit(self.limit))

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, index):
        return self.values[index]

    @property
    def above_count(self) -> int:
        return sum(should_trigger(v, self.limit) for v in self.values)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["index", "value", "above_limit"])
        for i, v in enumerate(self.values):
            writer.writerow([i, repr(float(v)), int(should_trigger(v, self.limit))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, limit=DEFAULT_LIMIT, seed: int = 0) -> "ValueTrace":
        rows = list(csv.DictReader(io.StringIO(text)))
        rows.sort(key=lambda r: int(r["index"]))
        return cls(tuple(float(r["value"]) for r in rows), as_limit(limit), seed)


def generate_trace(
    n: int, limit=DEFAULT_LIMIT, seed: int = 0, distribution: str = "uniform"
) -> ValueTrace:
    """Build the predefined value array driving a test run.

    The first ``n/2`` values lie in ``[limit-10, limit-1]`` and the last ``n/2``
    in ``[limit+1, limit+10]``. ``distribution="uniform"`` draws them from a
    ``random.Random(seed)`` stream rounded to 0.1 degC; ``"regular"`` spaces
    them evenly across each band and ignores the seed.
    """
    if n < 0 or n % 2:
        raise InvalidTraceLength(f"trace length must be even and >= 0, got {n}")
    if distribution not in TRACE_DISTRIBUTIONS:
        raise ValueError(f"unknown distribution {distribution!r}")
    limit = as_limit(limit)
    lim = float(limit)
    half = n // 2
    below_band = (lim - 10.0, lim - 1.0)
    above_band = (lim + 1.0, lim + 10.0)

    if distribution == "uniform":
        rng = random.Random(seed)

        def draw(lo, hi):
            return [round(rng.uniform(lo, hi), 1) for _ in range(half)]

    else:

        def draw(lo, hi):
            if half == 1:
                return [lo]
            return [round(lo + (hi - lo) * i / (half - 1), 6) for i in range(half)]

    values = draw(*below_band) + draw(*above_band)
    return ValueTrace(tuple(values), limit, seed)


def _as_arrays(samples) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(samples, "timestamps_us") and hasattr(samples, "power_mW"):
        return (
            np.asarray(samples.timestamps_us, dtype=np.int64),
            np.asarray(samples.power_mW, dtype=float),
        )
    samples = list(samples)
    t = np.fromiter((s.timestamp for s in samples), dtype=np.int64, count=len(samples))
    p = np.fromiter((s.power for s in samples), dtype=float, count=len(samples))
    return t, p


def integrate_energy(samples: Sequence[PowerSample] | Iterable[PowerSample]) -> Energy:
    """Trapezoidal integral of power over time, in mWs.

    Accepts a sequence of :class:`PowerSample` or any object exposing
    ``timestamps_us`` / ``power_mW`` arrays. Timestamps must strictly increase.
    """
    t, p = _as_arrays(samples)
    if len(t) < 2:
        return Energy(0.0)
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise InvalidSampleStream("sample timestamps must be strictly increasing")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise InvalidSampleStream("power samples must be finite and non-negative")
    total = float(np.sum((p[1:] + p[:-1]) * dt)) / 2.0 / US_PER_S
    return Energy(total)

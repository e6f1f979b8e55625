"""Experiment protocol: repeated runs per strategy, statistics and export."""

from __future__ import annotations

import csv
import io
import logging
import statistics
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

from .cloud import LocalCloud, SimTransport
from .core import DEFAULT_LIMIT, US_PER_S, Energy, Limit, ValueTrace, as_limit, generate_trace
from .devices import (
    EVENT_DRIVEN,
    STRATEGY_ALIASES,
    TIME_DRIVEN,
    ActuatorNode,
    DeviceRunLog,
    Strategy,
    onboard,
    run_loop,
)
from .errors import ConfigError, InsufficientData
from .power import (
    DEFAULT_COMPONENTS,
    DEFAULT_SAMPLE_INTERVAL_US,
    EnergyReport,
    PowerModel,
    account_energy,
    calibrate_default_model,
    sample_run,
)
from .scheduler import Scheduler, event_log_csv

log = logging.getLogger(__name__)

KINDS = ("sensor", "actuator", "framework")
COMPONENT_BY_KIND = {c.kind: c for c in DEFAULT_COMPONENTS}


@dataclass(frozen=True)
class ExperimentConfig:
    runs: int = 22
    measurements_per_run: int = 100
    limit: Limit = Limit(DEFAULT_LIMIT)
    seed: int = 0
    warmup_runs: int = 1
    mode: str = "sim"
    power_model: PowerModel = field(default_factory=calibrate_default_model)
    strategies: tuple = (TIME_DRIVEN, EVENT_DRIVEN)
    interleave: bool = False
    distribution: str = "uniform"
    sample_interval_us: int = DEFAULT_SAMPLE_INTERVAL_US
    # live mode only
    time_scale: float = 1.0
    framework_url: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "limit", as_limit(self.limit))
        try:
            kinds = tuple(dict.fromkeys(STRATEGY_ALIASES[k] for k in self.strategies))
        except KeyError as exc:
            raise ConfigError(f"unknown strategy {exc.args[0]!r}") from None
        object.__setattr__(self, "strategies", kinds)
        if self.runs <= self.warmup_runs:
            raise ConfigError(f"runs ({self.runs}) must exceed warmup_runs ({self.warmup_runs})")
        if self.warmup_runs < 0:
            raise ConfigError("warmup_runs must be >= 0")
        if self.measurements_per_run < 0 or self.measurements_per_run % 2:
            raise ConfigError("measurements_per_run must be even and >= 0")
        if self.mode not in ("sim", "live"):
            raise ConfigError(f"mode must be sim or live, got {self.mode!r}")
        if not self.strategies:
            raise ConfigError("at least one strategy is required")
        if self.sample_interval_us <= 0:
            raise ConfigError("sample_interval_us must be > 0")

    def strategy(self, kind: str) -> Strategy:
        interval = self.power_model.timing.measure_us
        if kind == EVENT_DRIVEN:
            return Strategy.event_driven(self.limit, interval)
        return Strategy.time_driven(interval)

    def trace(self) -> ValueTrace:
        return generate_trace(self.measurements_per_run, self.limit, self.seed, self.distribution)

    def run_order(self) -> list[tuple[str, int]]:
        if self.interleave:
            return [(k, i) for i in range(self.runs) for k in self.strategies]
        return [(k, i) for k in self.strategies for i in range(self.runs)]


@dataclass(frozen=True)
class RunReport:
    strategy: str
    run_index: int
    energies: tuple  # EnergyReport per component, in DEFAULT_COMPONENTS order
    duration: int  # us
    orchestrate_count: int
    activation_count: int
    excluded: bool
    lookup_count: int = 0
    authorization_count: int = 0
    event_log: tuple = field(default=(), compare=False, repr=False)
    device_log: Optional[DeviceRunLog] = field(default=None, compare=False, repr=False)

    def energy_of(self, kind: str) -> float:
        for r in self.energies:
            if r.component.kind == kind:
                return r.energy.amount
        raise KeyError(kind)

    @property
    def total_energy(self) -> float:
        return sum(r.energy.amount for r in self.energies)

    def scaled(self, k: float) -> "RunReport":
        return replace(self, energies=tuple(r.scaled(k) for r in self.energies))


@dataclass(frozen=True)
class StrategyStats:
    runs_used: int
    mean_mWs: dict  # kind -> mean
    std_mWs: dict  # kind -> sample std
    total_mean_mWs: float
    total_std_mWs: float
    mean_duration_s: float
    mean_orchestrations: float


@dataclass(frozen=True)
class ComparisonSummary:
    strategies: dict  # strategy kind -> StrategyStats
    percent_difference: Optional[float]  # 100 * (1 - event / time); None unless both ran

    def total(self, kind: str) -> float:
        return self.strategies[kind].total_mean_mWs


def simulate_run(config: ExperimentConfig, kind: str, run_index: int,
                 trace: Optional[ValueTrace] = None) -> RunReport:
    """One complete simulated run on a fresh local cloud and virtual clock."""
    trace = trace if trace is not None else config.trace()
    strategy = config.strategy(kind)
    scheduler = Scheduler()
    transport = SimTransport()
    cloud = LocalCloud(transport, clock=scheduler.clock)
    actuator = ActuatorNode(config.limit, clock=scheduler.clock)
    transport.bind("sim://actuator-1", actuator)
    onboard(cloud)
    device_log = run_loop(strategy, trace, scheduler, cloud, timing=config.power_model.timing)
    return _report(config, kind, run_index, device_log, cloud.counters.snapshot(),
                   len(actuator.state.activation_log))


def _report(config, kind, run_index, device_log, counters, activations) -> RunReport:
    energies = account_energy(device_log.events, config.power_model, run_index=run_index)
    return RunReport(
        strategy=kind,
        run_index=run_index,
        energies=tuple(energies[c] for c in DEFAULT_COMPONENTS),
        duration=device_log.duration_us,
        orchestrate_count=counters["orchestrations"],
        activation_count=activations,
        excluded=run_index < config.warmup_runs,
        lookup_count=counters["lookups"],
        authorization_count=counters["authorization_checks"],
        event_log=tuple(device_log.events),
        device_log=device_log,
    )


def run_experiment(config: ExperimentConfig) -> list[RunReport]:
    """Execute ``config.runs`` runs per strategy over one seeded trace."""
    if config.mode == "live":
        from .live import run_live_experiment

        return run_live_experiment(config)
    trace = config.trace()
    reports = []
    for kind, i in config.run_order():
        reports.append(simulate_run(config, kind, i, trace))
        log.debug("%s run %d done", kind, i)
    return reports


def summarize(reports: Sequence[RunReport]) -> ComparisonSummary:
    """Mean and sample standard deviation over the non-excluded runs."""
    by_strategy: dict[str, list[RunReport]] = {}
    for r in reports:
        by_strategy.setdefault(r.strategy, [])
        if not r.excluded:
            by_strategy[r.strategy].append(r)
    if not by_strategy:
        raise InsufficientData("no runs")
    stats = {}
    for kind in sorted(by_strategy, key=_strategy_order):
        used = by_strategy[kind]
        if not used:
            raise InsufficientData(f"every {kind} run is excluded")
        mean = {k: statistics.fmean(r.energy_of(k) for r in used) for k in KINDS}
        std = {k: _stdev([r.energy_of(k) for r in used]) for k in KINDS}
        totals = [r.total_energy for r in used]
        stats[kind] = StrategyStats(
            runs_used=len(used),
            mean_mWs=mean,
            std_mWs=std,
            total_mean_mWs=statistics.fmean(totals),
            total_std_mWs=_stdev(totals),
            mean_duration_s=statistics.fmean(r.duration for r in used) / US_PER_S,
            mean_orchestrations=statistics.fmean(r.orchestrate_count for r in used),
        )
    pct = None
    if TIME_DRIVEN in stats and EVENT_DRIVEN in stats:
        pct = 100.0 * (1.0 - stats[EVENT_DRIVEN].total_mean_mWs / stats[TIME_DRIVEN].total_mean_mWs)
    return ComparisonSummary(stats, pct)


def _stdev(values) -> float:
    return statistics.stdev(values) if len(values) > 1 else 0.0


def _strategy_order(kind: str) -> int:
    return (TIME_DRIVEN, EVENT_DRIVEN).index(kind) if kind in (TIME_DRIVEN, EVENT_DRIVEN) else 2


# -- export -----------------------------------------------------------------

RUN_FIELDS = [
    "strategy", "run_index", "excluded", "duration_us", "orchestrate_count", "lookup_count",
    "authorization_count", "activation_count", "sensor_mWs", "actuator_mWs", "framework_mWs",
    "total_mWs",
]


def runs_csv(reports: Sequence[RunReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RUN_FIELDS)
    for r in reports:
        writer.writerow([
            r.strategy, r.run_index, int(r.excluded), r.duration, r.orchestrate_count,
            r.lookup_count, r.authorization_count, r.activation_count,
            *(repr(r.energy_of(k)) for k in KINDS), repr(r.total_energy),
        ])
    return buf.getvalue()


def parse_runs_csv(text: str) -> list[RunReport]:
    reports = []
    for row in csv.DictReader(io.StringIO(text)):
        index = int(row["run_index"])
        duration = int(row["duration_us"])
        energies = tuple(
            EnergyReport(COMPONENT_BY_KIND[k], index, Energy(float(row[f"{k}_mWs"])), duration)
            for k in KINDS
        )
        reports.append(RunReport(
            strategy=row["strategy"],
            run_index=index,
            energies=energies,
            duration=duration,
            orchestrate_count=int(row["orchestrate_count"]),
            activation_count=int(row["activation_count"]),
            excluded=bool(int(row["excluded"])),
            lookup_count=int(row["lookup_count"]),
            authorization_count=int(row["authorization_count"]),
        ))
    return reports


def summary_rows(summary: ComparisonSummary) -> list[tuple]:
    rows = []
    for kind, st in summary.strategies.items():
        for k in KINDS:
            rows.append(("mean_mWs", kind, k, st.mean_mWs[k]))
            rows.append(("std_mWs", kind, k, st.std_mWs[k]))
        rows.append(("total_mean_mWs", kind, "", st.total_mean_mWs))
        rows.append(("total_std_mWs", kind, "", st.total_std_mWs))
        rows.append(("mean_duration_s", kind, "", st.mean_duration_s))
        rows.append(("mean_orchestrations", kind, "", st.mean_orchestrations))
        rows.append(("runs_used", kind, "", st.runs_used))
    if summary.percent_difference is not None:
        rows.append(("percent_difference", "", "", summary.percent_difference))
    return rows


def summary_csv(summary: ComparisonSummary) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["metric", "strategy", "component", "value"])
    for metric, kind, comp, value in summary_rows(summary):
        writer.writerow([metric, kind, comp, repr(value) if isinstance(value, float) else value])
    return buf.getvalue()


def parse_summary_csv(text: str) -> dict:
    """``{(metric, strategy, component): float}``."""
    return {
        (row["metric"], row["strategy"], row["component"]): float(row["value"])
        for row in csv.DictReader(io.StringIO(text))
    }


def summary_table(summary: ComparisonSummary) -> str:
    header = f"{'strategy':<14}{'runs':>6}{'duration s':>12}{'orchestr.':>11}"
    header += "".join(f"{k + ' mWs':>16}" for k in KINDS) + f"{'total mWs':>16}"
    lines = [header, "-" * len(header)]
    for kind, st in summary.strategies.items():
        line = f"{kind:<14}{st.runs_used:>6}{st.mean_duration_s:>12.3f}{st.mean_orchestrations:>11.1f}"
        line += "".join(f"{st.mean_mWs[k]:>16.1f}" for k in KINDS) + f"{st.total_mean_mWs:>16.1f}"
        lines.append(line)
        line = f"{'  sigma':<14}{'':>6}{'':>12}{'':>11}"
        line += "".join(f"{st.std_mWs[k]:>16.1f}" for k in KINDS) + f"{st.total_std_mWs:>16.1f}"
        lines.append(line)
    if summary.percent_difference is not None:
        lines.append("")
        lines.append(f"event-driven uses {summary.percent_difference:.2f} % less energy than time-driven")
    return "\n".join(lines) + "\n"


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def export(reports: Sequence[RunReport], summary: Optional[ComparisonSummary], path,
           model: Optional[PowerModel] = None, sample_interval_us: int = DEFAULT_SAMPLE_INTERVAL_US,
           trace: Optional[ValueTrace] = None) -> list[Path]:
    """Write runs.csv, summary.csv, summary.txt and per-run artifacts under ``path``.

    Per-run PMD, event-log and device-log CSVs are written for reports that
    still carry their event log. Existing files are overwritten.
    """
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc.strerror or exc}") from exc
    written = []

    def put(rel: str, text: str):
        target = out / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        _write(target, text)
        written.append(target)

    put("runs.csv", runs_csv(reports))
    if summary is not None:
        put("summary.csv", summary_csv(summary))
        put("summary.txt", summary_table(summary))
    if trace is not None:
        put("trace.csv", trace.to_csv())
    model = model or calibrate_default_model()
    for r in reports:
        if not r.event_log:
            continue
        stem = f"{r.strategy}_run{r.run_index:02d}"
        put(f"events/{stem}.csv", event_log_csv(r.event_log))
        if r.device_log is not None:
            put(f"devices/{stem}.csv", r.device_log.to_csv())
        traces = sample_run(r.event_log, model, sample_interval_us, duration_us=r.duration)
        for comp, tr in traces.items():
            put(f"pmd/{stem}_{comp.name}.csv", tr.to_csv())
    return written


def summarize_dir(path) -> ComparisonSummary:
    """Recompute the summary from ``path/runs.csv`` and rewrite summary files."""
    out = Path(path)
    reports = parse_runs_csv((out / "runs.csv").read_text())
    summary = summarize(reports)
    _write(out / "summary.csv", summary_csv(summary))
    _write(out / "summary.txt", summary_table(summary))
    return summary


def closed_form_counts(trace: ValueTrace) -> dict[str, int]:
    """Orchestrations per run each strategy must issue over ``trace``."""
    return {TIME_DRIVEN: len(trace), EVENT_DRIVEN: trace.above_count}


__all__ = [
    "ComparisonSummary", "ExperimentConfig", "RunReport", "StrategyStats", "closed_form_counts",
    "export", "parse_runs_csv", "parse_summary_csv", "run_experiment", "runs_csv", "simulate_run",
    "summarize", "summarize_dir", "summary_csv", "summary_table",
]

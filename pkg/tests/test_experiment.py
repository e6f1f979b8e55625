import pytest

from loopbench.devices import EVENT_DRIVEN, TIME_DRIVEN
from loopbench.errors import ConfigError, InsufficientData
from loopbench.experiment import (
    ExperimentConfig,
    closed_form_counts,
    export,
    parse_runs_csv,
    parse_summary_csv,
    run_experiment,
    runs_csv,
    summarize,
    summarize_dir,
)


@pytest.fixture(scope="module")
def default_reports():
    return run_experiment(ExperimentConfig())


def test_defaults(default_reports):
    for kind in (TIME_DRIVEN, EVENT_DRIVEN):
        runs = [r for r in default_reports if r.strategy == kind]
        assert len(runs) == 22
        assert runs[0].excluded and not any(r.excluded for r in runs[1:])


def test_orchestrate_counts(default_reports):
    config = ExperimentConfig()
    expected = closed_form_counts(config.trace())
    assert expected == {TIME_DRIVEN: 100, EVENT_DRIVEN: 50}
    for r in default_reports:
        assert r.orchestrate_count == r.lookup_count == r.authorization_count == expected[r.strategy]
        assert r.activation_count == 50


def test_count_conservation(default_reports):
    config = ExperimentConfig()
    for kind, per_run in ((TIME_DRIVEN, 100), (EVENT_DRIVEN, 50)):
        used = [r for r in default_reports if r.strategy == kind and not r.excluded]
        assert sum(r.orchestrate_count for r in used) == (config.runs - config.warmup_runs) * per_run


def test_small_runs_deterministic():
    config = ExperimentConfig(runs=2, measurements_per_run=4, seed=11)
    assert runs_csv(run_experiment(config)) == runs_csv(run_experiment(config))
    assert run_experiment(config) == run_experiment(config)


def test_interleave_order():
    config = ExperimentConfig(runs=3, measurements_per_run=4, interleave=True)
    order = [(r.strategy, r.run_index) for r in run_experiment(config)]
    assert order[:2] == [(TIME_DRIVEN, 0), (EVENT_DRIVEN, 0)]
    assert len(order) == 6


@pytest.mark.parametrize("kwargs", [
    {"runs": 1, "warmup_runs": 1},
    {"measurements_per_run": 7},
    {"mode": "cloud"},
    {"strategies": ("hybrid",)},
    {"warmup_runs": -1},
])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kwargs)


class TestSummarize:
    def test_default_percent(self, default_reports):
        summary = summarize(default_reports)
        assert summary.percent_difference == pytest.approx(7.0, abs=2.0)
        assert summary.strategies[TIME_DRIVEN].mean_duration_s == pytest.approx(125.0)
        assert summary.strategies[EVENT_DRIVEN].mean_duration_s == pytest.approx(114.0)
        assert summary.strategies[TIME_DRIVEN].runs_used == 21

    def test_identical_reports_zero(self, default_reports):
        twins = [r for r in default_reports if r.strategy == TIME_DRIVEN]
        from dataclasses import replace
        mirrored = twins + [replace(r, strategy=EVENT_DRIVEN) for r in twins]
        assert summarize(mirrored).percent_difference == 0.0

    def test_zero_deltas(self):
        from loopbench.power import calibrate_default_model

        config = ExperimentConfig(runs=3, power_model=calibrate_default_model().with_zero_deltas())
        pct = summarize(run_experiment(config)).percent_difference
        assert pct == pytest.approx(100 * (1 - 114 / 125), abs=1e-9)

    def test_all_excluded(self, default_reports):
        from dataclasses import replace

        with pytest.raises(InsufficientData):
            summarize([replace(r, excluded=True) for r in default_reports])
        with pytest.raises(InsufficientData):
            summarize([])

    def test_exclusion_invariance(self, default_reports):
        base = summarize(default_reports)
        perturbed = [r.scaled(1e6) if r.excluded else r for r in default_reports]
        assert summarize(perturbed) == base

    def test_single_strategy(self):
        config = ExperimentConfig(runs=3, measurements_per_run=4, strategies=("time",))
        summary = summarize(run_experiment(config))
        assert summary.percent_difference is None

    def test_sample_std(self, default_reports):
        from dataclasses import replace

        reports = list(default_reports)
        reports[1] = reports[1].scaled(1.1)  # first non-excluded time-driven run
        st = summarize(reports).strategies[TIME_DRIVEN]
        assert st.std_mWs["sensor"] > 0
        assert st.runs_used == 21


class TestExport:
    def test_files(self, default_reports, tmp_path):
        summary = summarize(default_reports)
        config = ExperimentConfig()
        export(default_reports, summary, tmp_path, trace=config.trace())
        for name in ("runs.csv", "summary.csv", "summary.txt", "trace.csv"):
            assert (tmp_path / name).is_file()
        rows = (tmp_path / "runs.csv").read_text().splitlines()
        assert len(rows) - 1 == 2 * 22
        assert len(list((tmp_path / "pmd").iterdir())) == 2 * 22 * 3
        assert len(list((tmp_path / "events").iterdir())) == 2 * 22
        parsed = parse_summary_csv((tmp_path / "summary.csv").read_text())
        assert parsed[("percent_difference", "", "")] == summary.percent_difference
        pmd = (tmp_path / "pmd" / "time_driven_run00_sensor-1.csv").read_text().splitlines()
        assert pmd[0] == "component,timestamp_us,power_mW"
        assert len(pmd) - 1 == 1251

    def test_idempotent(self, tmp_path):
        config = ExperimentConfig(runs=2, measurements_per_run=4)
        reports = run_experiment(config)
        export(reports, summarize(reports), tmp_path)
        first = {p: p.read_bytes() for p in tmp_path.rglob("*.csv")}
        export(reports, summarize(reports), tmp_path)
        assert {p: p.read_bytes() for p in tmp_path.rglob("*.csv")} == first

    def test_runs_csv_round_trip(self, default_reports):
        parsed = parse_runs_csv(runs_csv(default_reports))
        assert summarize(parsed) == summarize(default_reports)

    def test_summarize_dir(self, default_reports, tmp_path):
        export(default_reports, None, tmp_path)
        assert not (tmp_path / "summary.csv").exists()
        summary = summarize_dir(tmp_path)
        assert summary == summarize(default_reports)
        assert (tmp_path / "summary.txt").read_text().strip().endswith("than time-driven")

    def test_unwritable(self, tmp_path):
        target = tmp_path / "file"
        target.write_text("x")
        with pytest.raises(OSError, match="file"):
            export([], None, target / "sub")

"""``loopbench`` command line.

Exit codes: 0 success, 2 configuration error, 3 run aborted.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .core import Limit
from .errors import ConfigError, InsufficientData, LoopbenchError, RunAborted
from .experiment import ExperimentConfig, export, run_experiment, summarize, summarize_dir, summary_table
from .power import DEFAULT_SAMPLE_INTERVAL_US, PowerModel, calibrate_default_model

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORTED = 3

STRATEGY_CHOICES = {"time": ("time",), "event": ("event",), "both": ("time", "event")}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loopbench", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the experiment and export CSV reports")
    run.add_argument("--strategy", choices=sorted(STRATEGY_CHOICES), default="both")
    run.add_argument("--runs", type=int, default=22)
    run.add_argument("--measurements", type=int, default=100)
    run.add_argument("--limit", type=float, default=25.0)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--warmup", type=int, default=1, help="leading runs excluded from statistics")
    run.add_argument("--mode", choices=("sim", "live"), default="sim")
    run.add_argument("--power-model", metavar="FILE", help="key = value power model file")
    run.add_argument("--distribution", choices=("uniform", "regular"), default="uniform")
    run.add_argument("--interleave", action="store_true",
                     help="alternate strategies run by run instead of in blocks")
    run.add_argument("--sample-interval-ms", type=float, default=DEFAULT_SAMPLE_INTERVAL_US / 1000)
    run.add_argument("--time-scale", type=float, default=1.0,
                     help="live mode: real seconds per simulated second")
    run.add_argument("--out", required=True, metavar="DIR")

    summ = sub.add_parser("summarize", help="recompute summary.csv / summary.txt from runs.csv")
    summ.add_argument("dir")

    model = sub.add_parser("model", help="print the default calibrated power model")
    model.add_argument("--out", metavar="FILE")

    serve = sub.add_parser("serve", help="serve the framework or the actuator over HTTP")
    serve.add_argument("role", choices=("framework", "actuator"))
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8080)
    serve.add_argument("--limit", type=float, default=25.0)
    return parser


def _config(args) -> ExperimentConfig:
    model = PowerModel.from_file(args.power_model) if args.power_model else calibrate_default_model()
    try:
        limit = Limit(args.limit)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return ExperimentConfig(
        runs=args.runs,
        measurements_per_run=args.measurements,
        limit=limit,
        seed=args.seed,
        warmup_runs=args.warmup,
        mode=args.mode,
        power_model=model,
        strategies=STRATEGY_CHOICES[args.strategy],
        interleave=args.interleave,
        distribution=args.distribution,
        sample_interval_us=round(args.sample_interval_ms * 1000),
        time_scale=args.time_scale,
        framework_url=os.environ.get("LOOPBENCH_FRAMEWORK_URL"),
    )


def cmd_run(args) -> int:
    try:
        config = _config(args)
    except (ConfigError, OSError) as exc:
        print(f"loopbench: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        reports = run_experiment(config)
    except RunAborted as exc:
        print(f"loopbench: {exc}", file=sys.stderr)
        if exc.reports:
            export(exc.reports, None, args.out, config.power_model, config.sample_interval_us)
        return EXIT_ABORTED
    try:
        summary = summarize(reports)
    except InsufficientData as exc:
        print(f"loopbench: {exc}", file=sys.stderr)
        summary = None
    export(reports, summary, args.out, config.power_model, config.sample_interval_us, config.trace())
    if summary is not None:
        sys.stdout.write(summary_table(summary))
    return EXIT_OK


def cmd_summarize(args) -> int:
    try:
        summary = summarize_dir(args.dir)
    except FileNotFoundError as exc:
        print(f"loopbench: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InsufficientData as exc:
        print(f"loopbench: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    sys.stdout.write(summary_table(summary))
    return EXIT_OK


def cmd_model(args) -> int:
    text = calibrate_default_model().to_text()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_serve(args) -> int:
    from .live import serve

    serve(args.role, args.host, args.port, args.limit)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": cmd_run, "summarize": cmd_summarize, "model": cmd_model, "serve": cmd_serve}
    try:
        return handler[args.command](args)
    except ConfigError as exc:
        print(f"loopbench: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LoopbenchError as exc:
        print(f"loopbench: {exc}", file=sys.stderr)
        return EXIT_ABORTED


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``cvqueue {simulate,sweep,bench,scenarios}``.

Exit codes: 0 success, 1 invalid configuration, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import config as cfgmod
from .config import ConfigError, RunConfig, SweepSpec
from .harness import (
    ESTIMATORS,
    benchmark_filters,
    config_hash,
    dynamic_scenarios,
    evaluate,
    evaluate_schedule,
    run_pipeline,
    scenario_ids,
    write_estimates_csv,
    write_filter_snapshot_csv,
    write_report_csv,
)
from .simulation import ScenarioSchedule, run_scenario, write_trace_csv

log = logging.getLogger("cvqueue")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _csv_list(text: str) -> list[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def build_config(args: argparse.Namespace) -> RunConfig:
    """Resolve preset/config file and apply command-line overrides."""
    if args.config and args.preset:
        raise ConfigError("use either --config or --preset, not both")
    if args.config:
        config = cfgmod.load(args.config)
    elif args.preset:
        config = cfgmod.load_preset(args.preset)
    else:
        config = RunConfig()

    changes = {}
    if args.seeds:
        changes["seeds"] = tuple(int(s) for s in _csv_list(args.seeds))
    if args.seed is not None:
        changes["seeds"] = (args.seed,)
    if args.out:
        changes["out"] = args.out
    if args.format:
        changes["formats"] = tuple(f for chunk in args.format for f in _csv_list(chunk))
    if args.workers is not None:
        changes["workers"] = args.workers
    if getattr(args, "cycles", None) is not None:
        changes["bench_cycles"] = args.cycles
    if args.scenario:
        changes["schedule"] = dynamic_scenarios(args.scenario, config.schedule.timing)
    if args.estimators:
        names = tuple(n.upper() for n in _csv_list(args.estimators))
        changes["pipeline"] = replace(config.pipeline, estimators=names)
    if args.fallback:
        changes["pipeline"] = replace(changes.get("pipeline", config.pipeline), fallback=args.fallback)
    try:
        return replace(config, **changes) if changes else config
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _provenance(config: RunConfig) -> str:
    # output location and parallelism do not change results, so they stay out of the hash
    d = {k: v for k, v in cfgmod.to_dict(config).items() if k not in ("out", "workers", "formats")}
    return f"cvqueue config {config_hash(d)}"


def cmd_simulate(config: RunConfig) -> list[Path]:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    schedule, written, runs = config.schedule, [], []
    label = schedule.label
    for seed in config.seeds:
        states, observations = run_scenario(schedule, seed)
        run = run_pipeline(states, observations, schedule.cycle_params(), config.pipeline, seed)
        runs.append(run)
        if "csv" in config.formats:
            written.append(write_trace_csv(out / f"{label}_trace_{seed}.csv", states, observations))
            for name in config.pipeline.estimators:
                written.append(write_estimates_csv(out / f"{label}_{name}_{seed}.csv", run, name))
            if run.filters:
                written.append(write_filter_snapshot_csv(out / f"{label}_filters_{seed}.csv", run))
        if "svg" in config.formats:
            from .plots import plot_parameter_trajectories, plot_queue_estimates
            if run.filters:
                written.append(plot_parameter_trajectories(
                    run, out / f"{label}_params_{seed}.svg", f"{label}, seed {seed}", _provenance(config)))
            written.append(plot_queue_estimates(
                run, out / f"{label}_queue_{seed}.svg", title=f"{label}, seed {seed}",
                provenance=_provenance(config)))
    if len(schedule.cycle_params()) >= 2 and "csv" in config.formats:
        written.append(write_report_csv(out / f"{label}_report.csv",
                                        evaluate(runs, label, config.pipeline.warmup)))
    return written


def _sweep_cell(job):
    lam, p, cycles, timing, seeds, pipeline = job
    schedule = ScenarioSchedule.fixed(lam, p, cycles, timing, label=f"lam{lam:g}_p{p:g}")
    return evaluate_schedule(schedule, seeds, pipeline)[0]


def cmd_sweep(config: RunConfig) -> list[Path]:
    if config.sweep is None:
        raise ConfigError("sweep needs a 'sweep' section (try --preset paper-grid)")
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    sw: SweepSpec = config.sweep
    jobs = [(lam, p, sw.cycles, config.schedule.timing, config.seeds, config.pipeline)
            for lam in sw.lambdas for p in sw.ps]
    log.info("sweep: %d cells x %d seeds = %d scenario runs", len(jobs), len(config.seeds),
             len(jobs) * len(config.seeds))
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            cells = list(pool.map(_sweep_cell, jobs))
    else:
        cells = [_sweep_cell(job) for job in jobs]
    reports = [r for cell in cells for r in cell]

    written = []
    if "csv" in config.formats:
        written.append(write_report_csv(out / "sweep_report.csv", reports))
    if "svg" in config.formats:
        from .plots import plot_error_vs_p
        written.append(plot_error_vs_p(reports, out / "sweep_error_vs_p.svg", provenance=_provenance(config)))
    return written


def cmd_bench(config: RunConfig) -> list[Path]:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    params = config.schedule.cycle_params()[0]
    results = benchmark_filters(params, config.bench_cycles, config.pipeline, config.seeds[0])
    path = out / "bench.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filter", "channel", "cycles", "updates", "total_s", "per_cycle_s", "under_budget"])
        for r in results:
            writer.writerow([r.filter, r.channel, r.cycles, r.updates, f"{r.total_s:.6f}",
                             f"{r.per_cycle_s:.3e}", int(r.per_cycle_s < 0.1)])
    for r in results:
        print(f"{r.filter} {r.channel:<18} {r.cycles} cycles  total {r.total_s:.4f} s  "
              f"per cycle {r.per_cycle_s * 1e3:.4f} ms")
    return [path]


def cmd_scenarios(config: RunConfig) -> list[Path]:
    for sid in scenario_ids():
        s = dynamic_scenarios(sid)
        lams = " ".join(f"{b.lam:g}" for b in s.blocks)
        ps = " ".join(f"{b.p:g}" for b in s.blocks)
        print(f"{sid:<16} {len(s.blocks)} blocks x {s.block_cycles[0]} cycles | lambda: {lams} | p: {ps}")
    print("presets:", ", ".join(cfgmod.preset_names()))
    return []


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "bench": cmd_bench, "scenarios": cmd_scenarios}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvqueue", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("-v", "--verbose", action="store_true")
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--preset", help=f"bundled configuration ({', '.join(cfgmod.preset_names())})")
        p.add_argument("--seed", type=int, help="single seed (overrides config)")
        p.add_argument("--seeds", help="comma-separated seeds")
        p.add_argument("--out", help="output directory (created if missing)")
        p.add_argument("--format", action="append", help="csv, svg or csv,svg")
        p.add_argument("--estimators", help=f"comma-separated subset of {','.join(ESTIMATORS)}")
        p.add_argument("--fallback", choices=["last_known", "running_average"])
        p.add_argument("--scenario", choices=scenario_ids(), help="catalog schedule to run")
        p.add_argument("--workers", type=int)
        if name == "bench":
            p.add_argument("--cycles", type=int)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = build_config(args)
    except (ConfigError, ValueError, KeyError, OSError) as exc:
        print(f"cvqueue: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        written = COMMANDS[args.command](config)
    except ConfigError as exc:
        print(f"cvqueue: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"cvqueue: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for path in written:
        log.info("wrote %s", path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

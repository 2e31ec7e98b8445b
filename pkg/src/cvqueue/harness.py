"""Experiment harness: replay traces through every estimator and score them.

The error of an estimator on one cycle is ``D = n_hat - N``.  A run is scored
by the sample standard deviation of ``D`` (``sqrt_vd``); runs over several
seeds are averaged, never pooled.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .estimators import (
    UNFILTERED,
    FallbackMode,
    FallbackPolicy,
    NoObservation,
    fallback_estimate,
    qle_filtered,
    qle_known,
)
from .filters import (
    ChannelKind,
    CvHistory,
    KalmanConfig,
    KalmanTracker,
    ObservationChannel,
    ParticleConfig,
    ParticleTracker,
    RawObservationFilter,
    observe_channel,
)
from .simulation import (
    Block,
    CycleObservation,
    ScenarioSchedule,
    SignalTiming,
    TrafficParams,
    TrueCycleState,
    run_scenario,
)

ESTIMATORS = ("KNOWN", "QLE1", "QLE2", "QLE3", "KF", "PF")
FILTERED = ("KF", "PF")


def channel_to_p(kind: ChannelKind, value: float) -> float:
    """Penetration rate implied by a tracked p-channel value.

    The per-cycle p channel measures the unconnected share of arrivals, so
    the rate is its complement; the cumulative channel is a direct ratio.
    """
    if ChannelKind(kind) is ChannelKind.P_PER_CYCLE:
        return 1.0 - value
    return value


@dataclass(frozen=True)
class PipelineConfig:
    estimators: tuple[str, ...] = ESTIMATORS
    fallback: FallbackMode = FallbackMode.LAST_KNOWN
    lambda_channel: ChannelKind = ChannelKind.LAMBDA_PER_CYCLE
    p_channel: ChannelKind = ChannelKind.P_PER_CYCLE
    kalman: KalmanConfig = KalmanConfig()
    particle_lambda: ParticleConfig = ParticleConfig(weight_sd=0.05)
    particle_p: ParticleConfig = ParticleConfig(weight_sd=0.20)
    raw_prefilter: bool = False
    warmup: int = 0

    def __post_init__(self):
        object.__setattr__(self, "estimators", tuple(self.estimators))
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators: {sorted(unknown)}")
        if not self.estimators:
            raise ValueError("select at least one estimator")
        object.__setattr__(self, "fallback", FallbackMode(self.fallback))
        lam, p = ChannelKind(self.lambda_channel), ChannelKind(self.p_channel)
        if not lam.is_lambda or p.is_lambda:
            raise ValueError("lambda_channel must be a lambda kind and p_channel a p kind")
        object.__setattr__(self, "lambda_channel", lam)
        object.__setattr__(self, "p_channel", p)
        if self.warmup < 0:
            raise ValueError("warmup cannot be negative")


@dataclass
class EstimatorTrace:
    n_hat: np.ndarray
    used_fallback: np.ndarray


@dataclass
class FilterTrace:
    """Per-cycle filtered parameters (NaN before the first update)."""

    lam: np.ndarray
    p: np.ndarray
    lam_spread: np.ndarray
    p_spread: np.ndarray


@dataclass
class PipelineRun:
    n_true: np.ndarray
    estimates: dict[str, EstimatorTrace]
    filters: dict[str, FilterTrace]
    lam_true: np.ndarray
    p_true: np.ndarray
    cold_starts: dict[str, int] = field(default_factory=dict)


def _make_trackers(name, config: PipelineConfig, seed: int):
    lam_ch = ObservationChannel(config.lambda_channel)
    p_ch = ObservationChannel(config.p_channel)
    if name == "KF":
        return KalmanTracker(lam_ch, config.kalman), KalmanTracker(p_ch, config.kalman)
    # separate streams so the filter never perturbs the simulator draws
    ss = np.random.SeedSequence([seed, 0x5EED])
    lam_rng, p_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    return (ParticleTracker(lam_ch, config.particle_lambda, lam_rng),
            ParticleTracker(p_ch, config.particle_p, p_rng))


def run_pipeline(states: Sequence[TrueCycleState], observations: Sequence[CycleObservation],
                 params: Sequence[TrafficParams], config: PipelineConfig | None = None,
                 seed: int = 0) -> PipelineRun:
    """Run every configured estimator over one aligned trace."""
    config = config or PipelineConfig()
    n = len(states)
    if not (len(observations) == len(params) == n):
        raise ValueError("states, observations and params must be aligned")

    policies = {name: FallbackPolicy(config.fallback) for name in config.estimators}
    n_hat = {name: np.empty(n) for name in config.estimators}
    used = {name: np.zeros(n, dtype=bool) for name in config.estimators}
    trackers = {name: _make_trackers(name, config, seed) for name in config.estimators if name in FILTERED}
    traces = {name: FilterTrace(*(np.full(n, np.nan) for _ in range(4))) for name in trackers}
    prefilter = RawObservationFilter() if config.raw_prefilter else None
    history = CvHistory()

    for i, (obs, par) in enumerate(zip(observations, params)):
        if prefilter is not None:
            obs = prefilter(obs)
        history.add(obs)
        channel_values = {}
        for kind in (config.lambda_channel, config.p_channel):
            try:
                channel_values[kind] = observe_channel(obs, history, kind)
            except NoObservation:
                pass

        for name in config.estimators:
            if name == "KNOWN":
                est = qle_known(obs, par, policies[name])
            elif name in UNFILTERED:
                est = UNFILTERED[name](obs, policies[name])
            else:
                lam_tr, p_tr = trackers[name]
                for tracker in (lam_tr, p_tr):
                    x = channel_values.get(tracker.channel.kind)
                    if x is not None:
                        tracker.update(x)
                trace = traces[name]
                if lam_tr.estimate is not None:
                    trace.lam[i], trace.lam_spread[i] = lam_tr.estimate, lam_tr.spread
                if p_tr.estimate is not None:
                    trace.p[i] = channel_to_p(config.p_channel, p_tr.estimate)
                    trace.p_spread[i] = p_tr.spread
                if obs.empty or lam_tr.estimate is None or p_tr.estimate is None:
                    est = fallback_estimate(obs, name, policies[name])
                else:
                    p_f = min(max(trace.p[i], 0.0), 1.0)
                    lam_f = max(trace.lam[i], 0.0)
                    est = qle_filtered(obs, p_f, lam_f, policies[name], name)
            n_hat[name][i] = est.n_hat
            used[name][i] = est.used_fallback

    return PipelineRun(
        n_true=np.array([s.n_end_of_red for s in states], dtype=float),
        estimates={k: EstimatorTrace(n_hat[k], used[k]) for k in config.estimators},
        filters=traces,
        lam_true=np.array([p.lam for p in params]),
        p_true=np.array([p.p for p in params]),
        cold_starts={k: policies[k].cold_starts for k in config.estimators},
    )


# -- scoring -----------------------------------------------------------------

@dataclass
class EvalReport:
    config_id: str
    estimator_id: str
    sqrt_vd: float
    mean_n: float
    bias: float
    pct_delta: float | None
    fallback_fraction: float
    seeds: int
    per_seed: list[float] = field(default_factory=list)
    cold_start_fraction: float = 0.0

    def __post_init__(self):
        if self.seeds < 1:
            raise ValueError("a report needs at least one seed")

    def row(self) -> dict:
        out = asdict(self)
        out["per_seed"] = " ".join(f"{v:.6f}" for v in self.per_seed)
        return out


def error_std(n_hat: np.ndarray, n_true: np.ndarray, warmup: int = 0) -> float:
    d = np.asarray(n_hat, dtype=float)[warmup:] - np.asarray(n_true, dtype=float)[warmup:]
    if d.size < 2:
        raise ValueError("need at least two cycles to compute an error variance")
    return float(np.std(d, ddof=1))


def evaluate(runs: Sequence[PipelineRun], config_id: str = "run", warmup: int = 0) -> list[EvalReport]:
    """Score paired runs (one per seed) into one report per estimator."""
    if not runs:
        raise ValueError("no runs to evaluate")
    names = list(runs[0].estimates)
    per_seed = {k: [error_std(r.estimates[k].n_hat, r.n_true, warmup) for r in runs] for k in names}
    sqrt_vd = {k: float(np.mean(v)) for k, v in per_seed.items()}
    mean_n = float(np.mean([r.n_true[warmup:].mean() for r in runs]))
    reports = []
    for k in names:
        bias = float(np.mean([(r.estimates[k].n_hat - r.n_true)[warmup:].mean() for r in runs]))
        fb = float(np.mean([r.estimates[k].used_fallback[warmup:].mean() for r in runs]))
        cold = float(np.mean([r.cold_starts.get(k, 0) / r.n_true.size for r in runs]))
        pct = None
        if "KNOWN" in sqrt_vd and mean_n > 0:
            pct = 100.0 * (sqrt_vd[k] - sqrt_vd["KNOWN"]) / mean_n
        reports.append(EvalReport(config_id, k, sqrt_vd[k], mean_n, bias, pct, fb, len(runs),
                                  per_seed[k], cold))
    return reports


def simulate_and_run(schedule: ScenarioSchedule, seed: int, config: PipelineConfig | None = None) -> PipelineRun:
    states, observations = run_scenario(schedule, seed)
    return run_pipeline(states, observations, schedule.cycle_params(), config, seed)


def evaluate_schedule(schedule: ScenarioSchedule, seeds: Iterable[int],
                      config: PipelineConfig | None = None) -> tuple[list[EvalReport], list[PipelineRun]]:
    config = config or PipelineConfig()
    runs = [simulate_and_run(schedule, seed, config) for seed in seeds]
    return evaluate(runs, schedule.label, config.warmup), runs


def grid_sweep(lambdas: Sequence[float], ps: Sequence[float], seeds: Sequence[int],
               config: PipelineConfig | None = None, cycles: int = 100,
               timing: SignalTiming | None = None) -> list[EvalReport]:
    """Cartesian (lambda, p) sweep; every cell replays the same seeds."""
    if not lambdas or not ps or not seeds:
        raise ValueError("sweep grids and seed list must be non-empty")
    timing = timing or SignalTiming()
    reports = []
    for lam in lambdas:
        for p in ps:
            schedule = ScenarioSchedule.fixed(lam, p, cycles, timing, label=f"lam{lam:g}_p{p:g}")
            reports.extend(evaluate_schedule(schedule, seeds, config)[0])
    return reports


def sign_test(wins: int, trials: int) -> float:
    """One-sided p-value of at least ``wins`` successes out of ``trials`` fair coin flips."""
    return float(stats.binomtest(wins, trials, 0.5, alternative="greater").pvalue) if trials else 1.0


def paired_wins(candidate: Sequence[float], baseline: Sequence[float]) -> tuple[int, int]:
    """Seeds where ``candidate`` beats ``baseline``; ties count as discarded trials."""
    diff = np.asarray(candidate) - np.asarray(baseline)
    return int(np.sum(diff < 0)), int(np.sum(diff != 0))


# -- dynamic scenarios -------------------------------------------------------

BLOCK = 900.0
CATALOG_VERSION = 1

_CATALOG = {
    "rising-lambda": [(lam, 0.10) for lam in (0.163, 0.163, 0.190, 0.190, 0.218, 0.218, 0.239, 0.239, 0.267, 0.267)],
    "falling-lambda": [(lam, 0.10) for lam in (0.267, 0.267, 0.239, 0.239, 0.218, 0.218, 0.190, 0.190, 0.163, 0.163)],
    "peak-lambda": [(lam, 0.10) for lam in (0.163, 0.190, 0.218, 0.239, 0.267, 0.267, 0.239, 0.218, 0.190, 0.163)],
    "rising-p": [(0.239, p) for p in (0.05, 0.05, 0.10, 0.10, 0.15, 0.20, 0.20, 0.25, 0.30, 0.30)],
}


def scenario_ids() -> list[str]:
    return list(_CATALOG)


def dynamic_scenarios(catalog_id: str, timing: SignalTiming | None = None) -> ScenarioSchedule:
    """Built-in 15-minute regime schedules (catalog version ``CATALOG_VERSION``)."""
    try:
        regimes = _CATALOG[catalog_id]
    except KeyError:
        raise KeyError(f"unknown scenario {catalog_id!r}; choose from {scenario_ids()}") from None
    blocks = tuple(Block(BLOCK, lam, p) for lam, p in regimes)
    return ScenarioSchedule(blocks, timing or SignalTiming(), label=f"{catalog_id}-v{CATALOG_VERSION}")


def compare_fallback_policies(schedule: ScenarioSchedule, seeds: Sequence[int],
                              config: PipelineConfig | None = None) -> dict[FallbackMode, list[EvalReport]]:
    """Score both fallback policies on identical traces."""
    config = config or PipelineConfig()
    out = {}
    for mode in FallbackMode:
        cfg = PipelineConfig(**{**_fields(config), "fallback": mode})
        runs = []
        for seed in seeds:
            states, observations = run_scenario(schedule, seed)
            runs.append(run_pipeline(states, observations, schedule.cycle_params(), cfg, seed))
        out[mode] = evaluate(runs, f"{schedule.label}_{mode.value}", cfg.warmup)
    return out


def _fields(config: PipelineConfig) -> dict:
    return {f: getattr(config, f) for f in config.__dataclass_fields__}


# -- output ------------------------------------------------------------------

REPORT_COLUMNS = ("config_id", "estimator_id", "sqrt_vd", "mean_n", "bias", "pct_delta",
                  "fallback_fraction", "seeds", "per_seed", "cold_start_fraction")


def write_report_csv(path: str | Path, reports: Iterable[EvalReport]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, REPORT_COLUMNS)
        writer.writeheader()
        for report in reports:
            row = report.row()
            for key in ("sqrt_vd", "mean_n", "bias", "fallback_fraction", "cold_start_fraction"):
                row[key] = f"{row[key]:.6f}"
            row["pct_delta"] = "" if row["pct_delta"] is None else f"{row['pct_delta']:.6f}"
            writer.writerow(row)
    return path


def write_estimates_csv(path: str | Path, run: PipelineRun, estimator: str) -> Path:
    """Per-cycle truth and estimate for one estimator."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    trace = run.estimates[estimator]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cycle_index", "N", "n_hat", "error", "used_fallback"])
        for i, (n, est, fb) in enumerate(zip(run.n_true, trace.n_hat, trace.used_fallback)):
            writer.writerow([i, int(n), f"{est:.6f}", f"{est - n:.6f}", int(fb)])
    return path


def write_filter_snapshot_csv(path: str | Path, run: PipelineRun) -> Path:
    """One row per cycle, filter and channel: cycle_index, channel, estimate, spread."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cycle_index", "filter", "channel", "estimate", "spread", "truth"])
        for name, trace in run.filters.items():
            for i in range(trace.lam.size):
                for channel, est, spread, truth in (("lambda", trace.lam[i], trace.lam_spread[i], run.lam_true[i]),
                                                    ("p", trace.p[i], trace.p_spread[i], run.p_true[i])):
                    if not math.isnan(est):
                        writer.writerow([i, name, channel, f"{est:.6f}", f"{spread:.6f}", f"{truth:.6f}"])
    return path


def config_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]


# -- timing ------------------------------------------------------------------

@dataclass(frozen=True)
class BenchResult:
    filter: str
    channel: str
    cycles: int
    updates: int
    total_s: float

    @property
    def per_cycle_s(self) -> float:
        return self.total_s / self.cycles


def benchmark_filters(params: TrafficParams, cycles: int = 1000, config: PipelineConfig | None = None,
                      seed: int = 0) -> list[BenchResult]:
    """Wall-clock cost of running each filter over ``cycles`` cycles of one channel."""
    import time

    if cycles < 1:
        raise ValueError("benchmark needs at least one cycle")
    config = config or PipelineConfig()
    schedule = ScenarioSchedule.fixed(params.lam, params.p, cycles, params.timing)
    _, observations = run_scenario(schedule, seed)
    results = []
    for name in FILTERED:
        lam_tr, p_tr = _make_trackers(name, config, seed)
        for tracker in (lam_tr, p_tr):
            history = CvHistory()
            start = time.perf_counter()
            for obs in observations:
                history.add(obs)
                try:
                    x = observe_channel(obs, history, tracker.channel)
                except NoObservation:
                    continue
                tracker.update(x)
            elapsed = time.perf_counter() - start
            results.append(BenchResult(name, tracker.channel.kind.value, cycles, tracker.updates, elapsed))
    return results

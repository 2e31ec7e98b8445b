import csv

import numpy as np
import pytest

from cvqueue.estimators import FallbackMode
from cvqueue.filters import ChannelKind
from cvqueue.harness import (
    ESTIMATORS,
    EstimatorTrace,
    EvalReport,
    PipelineConfig,
    PipelineRun,
    benchmark_filters,
    channel_to_p,
    compare_fallback_policies,
    dynamic_scenarios,
    error_std,
    evaluate,
    evaluate_schedule,
    grid_sweep,
    paired_wins,
    run_pipeline,
    scenario_ids,
    sign_test,
    write_estimates_csv,
    write_filter_snapshot_csv,
    write_report_csv,
)
from cvqueue.plots import plot_error_vs_p, plot_parameter_trajectories, plot_queue_estimates
from cvqueue.simulation import LAMBDA_GRID, P_GRID, ScenarioSchedule, TrafficParams, run_scenario


def fake_run(n_true, **estimates):
    n_true = np.asarray(n_true, dtype=float)
    traces = {k: EstimatorTrace(np.asarray(v, dtype=float), np.zeros(n_true.size, dtype=bool))
              for k, v in estimates.items()}
    return PipelineRun(n_true, traces, {}, np.full(n_true.size, 0.2), np.full(n_true.size, 0.2))


def by_id(reports):
    return {r.estimator_id: r for r in reports}


# -- scoring -----------------------------------------------------------------

def test_perfect_estimator_scores_zero():
    n = [3, 7, 2, 9, 4]
    report = by_id(evaluate([fake_run(n, KNOWN=n)]))["KNOWN"]
    assert report.sqrt_vd == 0.0 and report.bias == 0.0 and report.pct_delta == 0.0


def test_constant_offset_is_bias_not_variance():
    n = np.array([3, 7, 2, 9, 4])
    report = by_id(evaluate([fake_run(n, KNOWN=n, QLE2=n + 3)]))["QLE2"]
    assert report.sqrt_vd == pytest.approx(0.0)
    assert report.bias == pytest.approx(3.0)
    assert report.pct_delta == pytest.approx(0.0)


def test_seed_statistics_are_averaged_not_pooled():
    n = np.zeros(4)
    # sample std (ddof=1) of +-a alternating over 4 cycles is a * sqrt(4/3)
    scale = np.sqrt(3 / 4)
    runs = [fake_run(n, QLE1=scale * np.array([2, -2, 2, -2])),
            fake_run(n + 1, QLE1=1 + scale * np.array([4, -4, 4, -4]))]
    report = by_id(evaluate(runs))["QLE1"]
    assert report.per_seed == pytest.approx([2.0, 4.0])
    assert report.sqrt_vd == pytest.approx(3.0)
    assert report.seeds == 2
    assert report.pct_delta is None  # no KNOWN baseline in these runs


def test_pct_delta_against_known_baseline():
    n = np.array([10.0, 10.0, 10.0, 10.0])
    runs = [fake_run(n, KNOWN=n + [1, -1, 1, -1], KF=n + [2, -2, 2, -2])]
    reports = by_id(evaluate(runs))
    gap = reports["KF"].sqrt_vd - reports["KNOWN"].sqrt_vd
    assert reports["KF"].pct_delta == pytest.approx(100 * gap / 10.0)


def test_error_std_needs_two_cycles():
    with pytest.raises(ValueError):
        error_std(np.array([1.0]), np.array([1.0]))
    with pytest.raises(ValueError):
        evaluate([])


def test_warmup_drops_leading_cycles():
    n = np.array([0, 0, 5, 5, 5], dtype=float)
    run = fake_run(n, KNOWN=[30, -30, 5, 5, 5])
    assert by_id(evaluate([run], warmup=2))["KNOWN"].sqrt_vd == 0.0
    assert by_id(evaluate([run], warmup=0))["KNOWN"].sqrt_vd > 10


def test_report_requires_a_seed():
    with pytest.raises(ValueError):
        EvalReport("c", "KNOWN", 0.0, 1.0, 0.0, None, 0.0, 0)


# -- pipeline ----------------------------------------------------------------

def test_pipeline_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(estimators=("QLE9",))
    with pytest.raises(ValueError):
        PipelineConfig(estimators=())
    with pytest.raises(ValueError):
        PipelineConfig(lambda_channel=ChannelKind.P_PER_CYCLE)
    with pytest.raises(ValueError):
        PipelineConfig(warmup=-1)


def test_channel_to_p():
    assert channel_to_p(ChannelKind.P_PER_CYCLE, 0.8) == pytest.approx(0.2)
    assert channel_to_p(ChannelKind.P_CUMULATIVE, 0.3) == 0.3


def test_estimators_are_independent_of_the_selection():
    # every estimator reads the same observation stream, so subsets agree with the full run
    schedule = ScenarioSchedule.fixed(0.218, 0.2, 60)
    states, observations = run_scenario(schedule, 3)
    params = schedule.cycle_params()
    full = run_pipeline(states, observations, params, PipelineConfig(), 3)
    for name in ESTIMATORS:
        alone = run_pipeline(states, observations, params, PipelineConfig(estimators=(name,)), 3)
        assert np.array_equal(alone.estimates[name].n_hat, full.estimates[name].n_hat)


def test_pipeline_is_deterministic():
    schedule = ScenarioSchedule.fixed(0.239, 0.1, 40)
    a = evaluate_schedule(schedule, [1, 2])[0]
    b = evaluate_schedule(schedule, [1, 2])[0]
    assert a == b


def test_filter_traces_follow_truth():
    schedule = ScenarioSchedule.fixed(0.218, 0.3, 100)
    run = evaluate_schedule(schedule, [4])[1][0]
    for name in ("KF", "PF"):
        trace = run.filters[name]
        assert abs(np.nanmean(trace.lam[50:]) - 0.218) < 0.04
        assert abs(np.nanmean(trace.p[50:]) - 0.3) < 0.1


def test_pipeline_rejects_misaligned_inputs():
    schedule = ScenarioSchedule.fixed(0.218, 0.2, 5)
    states, observations = run_scenario(schedule, 0)
    with pytest.raises(ValueError):
        run_pipeline(states, observations[:-1], schedule.cycle_params())


def test_raw_prefilter_pipeline_runs():
    schedule = ScenarioSchedule.fixed(0.218, 0.2, 50)
    reports = evaluate_schedule(schedule, [0, 1], PipelineConfig(raw_prefilter=True))[0]
    assert all(np.isfinite(r.sqrt_vd) for r in reports)


# -- sweeps ------------------------------------------------------------------

def test_full_grid_counts():
    names = ("QLE3", "KNOWN")
    reports = grid_sweep(LAMBDA_GRID, P_GRID, [1, 2, 3], PipelineConfig(estimators=names), cycles=4)
    assert len(reports) == 5 * 11 * len(names)
    for name in names:
        assert sum(r.seeds for r in reports if r.estimator_id == name) == 165
    assert all(len(r.per_seed) == 3 for r in reports)
    # cells come out in lambda-major order
    assert reports[0].config_id == "lam0.163_p0.001" and reports[-1].config_id == "lam0.267_p0.9"


def test_grid_sweep_rejects_empty_grids():
    with pytest.raises(ValueError):
        grid_sweep([], [0.1], [1])


def test_high_penetration_merges_filtered_and_unfiltered():
    reports = grid_sweep(LAMBDA_GRID, [0.90], [0, 1, 2], cycles=100)
    cells = {}
    for r in reports:
        cells.setdefault(r.config_id, {})[r.estimator_id] = r.sqrt_vd
    for cell in cells.values():
        for unfiltered in ("QLE2", "QLE3"):
            for filtered in ("KF", "PF"):
                assert abs(cell[unfiltered] - cell[filtered]) < 0.5


def test_tiny_penetration_is_mostly_fallback():
    reports = grid_sweep(LAMBDA_GRID, [0.001], [0, 1, 2], cycles=100)
    assert all(r.fallback_fraction > 0.9 for r in reports)


def test_filtered_error_falls_with_penetration():
    seeds = range(10)
    config = PipelineConfig(estimators=("KF", "PF"))
    for lam in LAMBDA_GRID:
        curve = {"KF": [], "PF": []}
        for p in (0.05, 0.10, 0.20, 0.30):
            for r in evaluate_schedule(ScenarioSchedule.fixed(lam, p, 100), seeds, config)[0]:
                curve[r.estimator_id].append(r.sqrt_vd)
        for values in curve.values():
            assert all(b <= a for a, b in zip(values, values[1:]))


def test_full_penetration_drives_error_to_zero():
    reports = by_id(evaluate_schedule(ScenarioSchedule.fixed(0.218, 1.0, 100), [0, 1, 2])[0])
    for name in ("KNOWN", "QLE2", "QLE3", "KF"):
        assert reports[name].sqrt_vd < 1e-9
    assert reports["PF"].sqrt_vd < 0.1


# -- statistics helpers -------------------------------------------------------

def test_sign_test_thresholds():
    assert sign_test(9, 10) < 0.05
    assert sign_test(8, 10) > 0.05
    assert sign_test(10, 10) == pytest.approx(1 / 1024)
    assert sign_test(0, 0) == 1.0


def test_paired_wins_discards_ties():
    assert paired_wins([1.0, 2.0, 3.0, 4.0], [2.0, 2.0, 1.0, 5.0]) == (2, 3)


# -- dynamic scenarios and fallback comparison --------------------------------

def test_catalog_contents():
    ids = scenario_ids()
    assert ids == ["rising-lambda", "falling-lambda", "peak-lambda", "rising-p"]
    for sid in ids:
        schedule = dynamic_scenarios(sid)
        assert 8 <= len(schedule.blocks) <= 12
        assert all(b.duration == 900.0 for b in schedule.blocks)
        assert schedule.block_cycles == [10] * len(schedule.blocks)
        assert schedule.label.endswith("-v1")
    peak = [b.lam for b in dynamic_scenarios("peak-lambda").blocks]
    assert peak[0] == peak[-1] == 0.163 and max(peak) == 0.267
    top = peak.index(max(peak))
    assert peak[:top + 1] == sorted(peak[:top + 1])
    assert all(b.p == 0.10 for b in dynamic_scenarios("peak-lambda").blocks)
    rising_p = dynamic_scenarios("rising-p").blocks
    assert rising_p[0].p == 0.05 and rising_p[-1].p == 0.30
    assert [b.p for b in rising_p] == sorted(b.p for b in rising_p)
    assert all(b.lam == 0.239 for b in rising_p)


def test_catalog_is_reproducible():
    assert dynamic_scenarios("peak-lambda") == dynamic_scenarios("peak-lambda")


def test_unknown_scenario():
    with pytest.raises(KeyError):
        dynamic_scenarios("x")


def _fallback_sqrt_vd(schedule, seeds, names=("KF", "PF")):
    out = compare_fallback_policies(schedule, seeds, PipelineConfig(estimators=names))
    return {mode: by_id(reports) for mode, reports in out.items()}


def test_last_known_beats_average_at_low_penetration():
    schedule = ScenarioSchedule.fixed(TrafficParams.from_rho(0.99, 0.05).lam, 0.05, 100)
    result = _fallback_sqrt_vd(schedule, [0, 1, 2])
    for name in ("KF", "PF"):
        assert (result[FallbackMode.LAST_KNOWN][name].sqrt_vd
                <= result[FallbackMode.RUNNING_AVERAGE][name].sqrt_vd)


def test_policies_agree_when_fallback_is_rare():
    schedule = ScenarioSchedule.fixed(0.267, 0.90, 100)
    result = _fallback_sqrt_vd(schedule, [0, 1, 2], names=("KNOWN", "QLE2"))
    for name in ("KNOWN", "QLE2"):
        a = result[FallbackMode.LAST_KNOWN][name]
        b = result[FallbackMode.RUNNING_AVERAGE][name]
        assert a.fallback_fraction < 0.01
        assert abs(a.sqrt_vd - b.sqrt_vd) < 0.05


def test_zero_penetration_leaves_policies_at_initial_state():
    schedule = ScenarioSchedule.fixed(0.218, 0.0, 20)
    result = _fallback_sqrt_vd(schedule, [0, 1], names=("KNOWN", "QLE1", "KF"))
    for reports in result.values():
        for r in reports.values():
            assert r.fallback_fraction == 1.0
            assert r.cold_start_fraction == 1.0
    a, b = result.values()
    assert a["KF"].sqrt_vd == b["KF"].sqrt_vd


# -- output ------------------------------------------------------------------

def test_report_csv_is_deterministic(tmp_path):
    schedule = ScenarioSchedule.fixed(0.218, 0.2, 30)
    first = write_report_csv(tmp_path / "a.csv", evaluate_schedule(schedule, [1, 2, 3])[0])
    second = write_report_csv(tmp_path / "b.csv", evaluate_schedule(schedule, [1, 2, 3])[0])
    assert first.read_bytes() == second.read_bytes()
    rows = list(csv.DictReader(first.open()))
    assert [r["estimator_id"] for r in rows] == list(ESTIMATORS)
    assert all(len(r["per_seed"].split()) == 3 for r in rows)
    assert all(float(r["sqrt_vd"]) >= 0 for r in rows)


def test_estimate_and_snapshot_csv(tmp_path):
    schedule = ScenarioSchedule.fixed(0.218, 0.2, 20)
    run = evaluate_schedule(schedule, [5])[1][0]
    est = list(csv.DictReader(write_estimates_csv(tmp_path / "e.csv", run, "KF").open()))
    assert len(est) == 20
    assert set(est[0]) == {"cycle_index", "N", "n_hat", "error", "used_fallback"}
    snap = list(csv.DictReader(write_filter_snapshot_csv(tmp_path / "f.csv", run).open()))
    assert set(snap[0]) == {"cycle_index", "filter", "channel", "estimate", "spread", "truth"}
    assert {r["filter"] for r in snap} == {"KF", "PF"}
    assert {r["channel"] for r in snap} == {"lambda", "p"}


def test_svg_output_is_deterministic(tmp_path):
    schedule = ScenarioSchedule.fixed(0.218, 0.2, 20)
    run = evaluate_schedule(schedule, [5])[1][0]
    a = plot_parameter_trajectories(run, tmp_path / "a.svg", "t", "hash1")
    b = plot_parameter_trajectories(run, tmp_path / "b.svg", "t", "hash1")
    assert a.read_bytes() == b.read_bytes()
    assert b"hash1" in a.read_bytes()
    assert plot_queue_estimates(run, tmp_path / "q.svg").read_bytes().startswith(b"<?xml")
    reports = grid_sweep([0.163, 0.218], [0.1, 0.3], [0], cycles=10)
    assert plot_error_vs_p(reports, tmp_path / "e.svg").stat().st_size > 0


def test_benchmark_filters():
    results = benchmark_filters(TrafficParams(0.218, 0.2), cycles=50)
    assert {(r.filter, r.channel) for r in results} == {
        ("KF", "lambda_per_cycle"), ("KF", "p_per_cycle"), ("PF", "lambda_per_cycle"), ("PF", "p_per_cycle")}
    assert all(r.total_s >= 0 and 0 < r.updates <= 50 for r in results)
    with pytest.raises(ValueError):
        benchmark_filters(TrafficParams(0.218, 0.2), cycles=0)

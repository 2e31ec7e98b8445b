"""
Changing traffic and missing observations
=========================================

Play a catalog schedule whose arrival rate climbs to a peak and falls back,
then compare the two ways of filling cycles that carry no CV at all.
"""

from pathlib import Path

from cvqueue import (PipelineConfig, ScenarioSchedule, compare_fallback_policies, dynamic_scenarios,
                     evaluate_schedule)
from cvqueue.plots import plot_parameter_trajectories

schedule = dynamic_scenarios("peak-lambda")
print(schedule.label, [b.lam for b in schedule.blocks])

reports, runs = evaluate_schedule(schedule, seeds=range(5))
for r in reports:
    print(f"{r.estimator_id:6s} sqrt(V(D)) = {r.sqrt_vd:5.2f}")
plot_parameter_trajectories(runs[0], Path("tutorial_output") / "peak_lambda.svg", schedule.label)

# near capacity with 5% connected, many cycles carry no usable CV;
# queues persist from cycle to cycle, so the latest estimate is the better stand-in
sparse = ScenarioSchedule.fixed(0.267, 0.05, 100)
result = compare_fallback_policies(sparse, seeds=range(5), config=PipelineConfig(estimators=("KF", "PF")))
for mode, rows in result.items():
    print(mode.value, {r.estimator_id: round(r.sqrt_vd, 2) for r in rows},
          "fallback share", round(rows[0].fallback_fraction, 2))

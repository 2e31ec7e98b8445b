"""
Filtering the arrival and penetration rates
===========================================

Per-cycle estimates of lambda and p are noisy.  A scalar Kalman filter and a
bootstrap particle filter smooth them; the filtered values then drive the
queue-length estimate.
"""

import numpy as np

from cvqueue import PipelineConfig, ScenarioSchedule, evaluate, run_pipeline, run_scenario

schedule = ScenarioSchedule.fixed(0.267, 0.2, 60)
states, observations = run_scenario(schedule, seed=3)
run = run_pipeline(states, observations, schedule.cycle_params(), PipelineConfig(), seed=3)

for name, trace in run.filters.items():
    print(f"{name}: lambda after 10 cycles {trace.lam[9]:.3f}, after 60 {trace.lam[-1]:.3f} (truth 0.267)")
    print(f"{name}: p      after 10 cycles {trace.p[9]:.3f}, after 60 {trace.p[-1]:.3f} (truth 0.200)")

# sqrt(V(D)) is the spread of the per-cycle error N_hat - N
for report in evaluate([run], "demo"):
    print(f"{report.estimator_id:6s} sqrt(V(D)) = {report.sqrt_vd:6.2f}   bias = {report.bias:+.2f}")

# the particle filter keeps a whole cloud; its spread shrinks as data arrive
pf = run.filters["PF"]
print("PF lambda spread, first vs last cycle:", np.round(pf.lam_spread[[0, -1]], 4))

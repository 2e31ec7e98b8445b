"""
Observing a queue through connected vehicles
============================================

Simulate a few signal cycles, look at what the connected vehicles reveal at
the end of red, and turn that into queue-length estimates.
"""

import numpy as np

from cvqueue import FallbackPolicy, ScenarioSchedule, qle1, qle2, qle3, run_scenario
from cvqueue.estimators import estimate_lambda, estimate_p
from cvqueue.simulation import CycleObservation

# 20 cycles at 0.218 veh/s with one vehicle in five connected
schedule = ScenarioSchedule.fixed(0.218, 0.2, 20)
states, observations = run_scenario(schedule, seed=1)

print("cycle  N   l     t   m")
for state, obs in zip(states[:8], observations[:8]):
    print(f"{obs.cycle_index:5d} {state.n_end_of_red:2d} {obs.l:3d} {obs.t:5.1f} {obs.m:3d}")

# the farthest CV sits at position l; the vehicles behind it are unseen
obs = CycleObservation(0, l=6, t=10.0, m=2, red=45.0)
print("p estimates   ", estimate_p(obs))
print("rate estimates", estimate_lambda(obs))
for fn in (qle1, qle2, qle3):
    print(fn.__name__, round(fn(obs, FallbackPolicy()).n_hat, 3))

# cycles without a CV fall back on the last regular estimate
policy = FallbackPolicy("last_known")
n_hat = np.array([qle2(o, policy).n_hat for o in observations])
n_true = np.array([s.n_end_of_red for s in states])
print("mean error over the run:", round(float(np.mean(n_hat - n_true)), 2))

"""Cycle-to-cycle queue length estimation from connected vehicles with filtered primary parameters."""
from .estimators import (
    DegenerateTime,
    FallbackMode,
    FallbackPolicy,
    NoObservation,
    ParamEstimate,
    QleEstimate,
    estimate_lambda,
    estimate_p,
    qle1,
    qle2,
    qle3,
    qle_filtered,
    qle_known,
)
from .filters import (
    ChannelKind,
    CvHistory,
    KalmanConfig,
    KalmanState,
    KalmanTracker,
    ObservationChannel,
    ParticleConfig,
    ParticleSet,
    ParticleTracker,
    filter_raw_observation,
    init_particles,
    kf_update,
    observe_channel,
    pf_step,
)
from .harness import (
    EvalReport,
    PipelineConfig,
    compare_fallback_policies,
    dynamic_scenarios,
    evaluate,
    evaluate_schedule,
    grid_sweep,
    run_pipeline,
)
from .simulation import (
    Block,
    CycleObservation,
    ScenarioSchedule,
    SignalTiming,
    TrafficParams,
    TrueCycleState,
    run_scenario,
    sample_cv,
    simulate_cycle,
)

__version__ = "0.1.0"

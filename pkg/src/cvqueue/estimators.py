"""Queue-length and primary-parameter estimators built on the CV triplet (l, t, m).

All queue-length estimators return fractional vehicle counts.  A cycle without
a usable observation is answered by a :class:`FallbackPolicy`.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .simulation import CycleObservation, TrafficParams


class NoObservation(ValueError):
    """The cycle carries no connected-vehicle information (l == 0)."""


class DegenerateTime(NoObservation):
    """The farthest CV joined before red started (t == 0), so rate formulas divide by zero."""


class FallbackMode(str, Enum):
    LAST_KNOWN = "last_known"
    RUNNING_AVERAGE = "running_average"


class FallbackPolicy:
    """Supplies an estimate on cycles the formulas cannot handle.

    ``LAST_KNOWN`` repeats the latest regular estimate; ``RUNNING_AVERAGE``
    returns the mean of every regular estimate so far.  Until the first regular
    estimate arrives the policy answers ``initial`` and counts a cold start.
    """

    def __init__(self, mode: FallbackMode | str = FallbackMode.LAST_KNOWN, initial: float = 0.0):
        self.mode = FallbackMode(mode)
        self.initial = float(initial)
        self.last = None
        self.total = 0.0
        self.count = 0
        self.cold_starts = 0

    @property
    def primed(self) -> bool:
        return self.count > 0

    @property
    def state(self) -> float:
        if not self.primed:
            return self.initial
        if self.mode is FallbackMode.LAST_KNOWN:
            return self.last
        return self.total / self.count

    def record(self, n_hat: float) -> None:
        self.last = float(n_hat)
        self.total += float(n_hat)
        self.count += 1

    def value(self) -> float:
        if not self.primed:
            self.cold_starts += 1
        return self.state


@dataclass(frozen=True)
class ParamEstimate:
    p_hat_a: float
    p_hat_b: float
    lambda_hat_a: float
    lambda_hat_b: float


@dataclass(frozen=True)
class QleEstimate:
    cycle_index: int
    n_hat: float
    estimator_id: str
    used_fallback: bool


def _require_queue(obs: CycleObservation) -> None:
    if obs.l <= 0:
        raise NoObservation(f"cycle {obs.cycle_index}: no connected vehicle in queue")


def _require_time(obs: CycleObservation) -> None:
    _require_queue(obs)
    if obs.t <= 0:
        raise DegenerateTime(f"cycle {obs.cycle_index}: farthest CV is a residual vehicle")


def _clip01(x: float) -> float:
    return min(max(x, 0.0), 1.0)


def estimate_p(obs: CycleObservation) -> tuple[float, float]:
    """Penetration-rate pair ``(1 - mt/(mt + (l-m)R), m/l)``, clamped to [0, 1].

    The first form equals 0 when every queued vehicle is connected (l == m):
    it is the share of the arrival-rate estimate attributed to unseen
    vehicles, so it behaves like ``1 - p`` rather than ``p``.
    """
    _require_queue(obs)
    l, t, m, R = obs.l, obs.t, obs.m, obs.red
    denom = m * t + (l - m) * R
    p_a = 1.0 - m * t / denom if denom > 0 else 0.0
    return _clip01(p_a), _clip01(m / l)


def estimate_lambda(obs: CycleObservation) -> tuple[float, float]:
    _require_time(obs)
    l, t, m, R = obs.l, obs.t, obs.m, obs.red
    return (l - m) / t + m / R, l / t


def estimate_params(obs: CycleObservation) -> ParamEstimate:
    p_a, p_b = estimate_p(obs)
    lam_a, lam_b = estimate_lambda(obs)
    return ParamEstimate(p_a, p_b, lam_a, lam_b)


def _finish(obs, n_hat, estimator_id, fallback):
    fallback.record(n_hat)
    return QleEstimate(obs.cycle_index, n_hat, estimator_id, False)


def fallback_estimate(obs: CycleObservation, estimator_id: str, fallback: FallbackPolicy) -> QleEstimate:
    return QleEstimate(obs.cycle_index, fallback.value(), estimator_id, True)


def qle1(obs: CycleObservation, fallback: FallbackPolicy) -> QleEstimate:
    """l + (1 - mt/(lR)) (l/t) (R - t); equivalently R*l/t - m(R - t)."""
    try:
        _require_time(obs)
    except NoObservation:
        return fallback_estimate(obs, "QLE1", fallback)
    l, t, m, R = obs.l, obs.t, obs.m, obs.red
    n_hat = l + (1.0 - m * t / (l * R)) * (l / t) * (R - t)
    return _finish(obs, n_hat, "QLE1", fallback)


def qle2(obs: CycleObservation, fallback: FallbackPolicy) -> QleEstimate:
    try:
        _require_time(obs)
    except NoObservation:
        return fallback_estimate(obs, "QLE2", fallback)
    l, t, m, R = obs.l, obs.t, obs.m, obs.red
    return _finish(obs, l + (l - m) / t * (R - t), "QLE2", fallback)


def qle3(obs: CycleObservation, fallback: FallbackPolicy) -> QleEstimate:
    try:
        _require_time(obs)
    except NoObservation:
        return fallback_estimate(obs, "QLE3", fallback)
    l, t, m, R = obs.l, obs.t, obs.m, obs.red
    return _finish(obs, m + R * (l - m) / t, "QLE3", fallback)


def tail_estimate(obs: CycleObservation, p: float, lam: float) -> float:
    """l plus the expected number of unconnected arrivals after the farthest CV."""
    return obs.l + (1.0 - p) * lam * (obs.red - obs.t)


def qle_known(obs: CycleObservation, params: TrafficParams, fallback: FallbackPolicy) -> QleEstimate:
    if obs.empty:
        return fallback_estimate(obs, "KNOWN", fallback)
    return _finish(obs, tail_estimate(obs, params.p, params.lam), "KNOWN", fallback)


def qle_filtered(obs: CycleObservation, p_filtered: float, lambda_filtered: float,
                 fallback: FallbackPolicy, estimator_id: str = "FILTERED") -> QleEstimate:
    if obs.empty:
        return fallback_estimate(obs, estimator_id, fallback)
    return _finish(obs, tail_estimate(obs, p_filtered, lambda_filtered), estimator_id, fallback)


UNFILTERED = {"QLE1": qle1, "QLE2": qle2, "QLE3": qle3}

"""Scalar Kalman and bootstrap particle filters for the primary parameters.

Both filters consume one clamped observation channel per cycle.  Cycles that
yield no channel value leave the filter state untouched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

import numpy as np

from .estimators import NoObservation, DegenerateTime
from .simulation import CycleObservation


class ChannelKind(str, Enum):
    LAMBDA_PER_CYCLE = "lambda_per_cycle"
    LAMBDA_CUMULATIVE = "lambda_cumulative"
    P_PER_CYCLE = "p_per_cycle"
    P_CUMULATIVE = "p_cumulative"

    @property
    def is_lambda(self) -> bool:
        return self in (ChannelKind.LAMBDA_PER_CYCLE, ChannelKind.LAMBDA_CUMULATIVE)


DEFAULT_CLAMP = {
    ChannelKind.LAMBDA_PER_CYCLE: 0.272,
    ChannelKind.LAMBDA_CUMULATIVE: 0.280,
    ChannelKind.P_PER_CYCLE: 1.00,
    ChannelKind.P_CUMULATIVE: 1.00,
}


@dataclass(frozen=True)
class ObservationChannel:
    kind: ChannelKind
    clamp_bound: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ChannelKind(self.kind))
        if self.clamp_bound is None:
            object.__setattr__(self, "clamp_bound", DEFAULT_CLAMP[self.kind])
        if not self.clamp_bound > 0:
            raise ValueError("clamp bound must be positive")


@dataclass
class CvHistory:
    """Running sums of L, T and M over cycles whose farthest CV joined during red."""

    sum_l: float = 0.0
    sum_t: float = 0.0
    sum_m: float = 0.0
    cycles: int = 0

    def add(self, obs: CycleObservation) -> None:
        if obs.l > 0 and obs.t > 0:
            self.sum_l += obs.l
            self.sum_t += obs.t
            self.sum_m += obs.m
            self.cycles += 1


def observe_channel(obs: CycleObservation, history: CvHistory,
                    channel: ObservationChannel | ChannelKind | str) -> float:
    """Clamped channel value for this cycle, or :class:`NoObservation`.

    Per-cycle channels read ``obs`` only; cumulative channels read
    ``history``, which the caller is expected to have updated with ``obs``.
    """
    if not isinstance(channel, ObservationChannel):
        channel = ObservationChannel(channel)
    kind, bound = channel.kind, channel.clamp_bound

    if kind in (ChannelKind.LAMBDA_PER_CYCLE, ChannelKind.P_PER_CYCLE):
        if obs.l <= 0:
            raise NoObservation(f"cycle {obs.cycle_index}: no CV")
        if obs.t <= 0:
            raise DegenerateTime(f"cycle {obs.cycle_index}: residual-only CV")
        l, t, m, R = obs.l, obs.t, obs.m, obs.red
        if kind is ChannelKind.LAMBDA_PER_CYCLE:
            value = (l - m) / t + m / R
        else:
            value = 1.0 - m * t / (m * t + (l - m) * R)
    else:
        if obs.l <= 0 or obs.t <= 0:
            raise NoObservation(f"cycle {obs.cycle_index}: nothing new for the running sums")
        if history.sum_t <= 0 or history.sum_l <= 0:
            raise NoObservation("running sums are still empty")
        if kind is ChannelKind.LAMBDA_CUMULATIVE:
            value = history.sum_l / history.sum_t
        else:
            value = history.sum_m / history.sum_l
    return min(value, bound)


# -- Kalman filter -----------------------------------------------------------

@dataclass(frozen=True)
class KalmanState:
    mu: float
    S: float
    s: float

    def __post_init__(self):
        if not (self.S > 0 and self.s > 0):
            raise ValueError("system and sensor uncertainty must be positive")


def kf_update(state: KalmanState, x: float) -> KalmanState:
    gain = state.S / (state.S + state.s)
    innovation = x - state.mu
    return KalmanState(state.mu + gain * innovation, (1.0 - gain) * state.S, state.s)


@dataclass(frozen=True)
class KalmanConfig:
    S0: float = 0.05
    s: float = 0.01


class KalmanTracker:
    """Kalman filter on one channel, seeded with the first observed value."""

    name = "KF"

    def __init__(self, channel: ObservationChannel | ChannelKind | str, config: KalmanConfig | None = None):
        self.channel = channel if isinstance(channel, ObservationChannel) else ObservationChannel(channel)
        self.config = config or KalmanConfig()
        self.state: KalmanState | None = None
        self.updates = 0

    @property
    def estimate(self) -> float | None:
        return None if self.state is None else self.state.mu

    @property
    def spread(self) -> float | None:
        return None if self.state is None else math.sqrt(self.state.S)

    def update(self, x: float) -> float:
        if self.state is None:
            self.state = KalmanState(x, self.config.S0, self.config.s)
        else:
            self.state = kf_update(self.state, x)
        self.updates += 1
        return self.state.mu


# -- particle filter ---------------------------------------------------------

def identity(u):
    return u


def squash(u):
    """u / (1 + u^2), the optional observation transform."""
    return u / (1.0 + u * u)


@dataclass(frozen=True)
class ParticleConfig:
    n: int = 1000
    jitter_sd: float = math.sqrt(0.0005)
    weight_sd: float = 0.05
    init_mode: str = "uniform"
    init_sd: float = math.sqrt(0.05)
    resampler: str = "wheel"
    transform: str = "identity"

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("a particle set needs at least two particles")
        if self.jitter_sd < 0 or self.weight_sd <= 0 or self.init_sd <= 0:
            raise ValueError("particle noise levels must be positive")
        if self.init_mode not in ("uniform", "gaussian"):
            raise ValueError(f"unknown init mode {self.init_mode!r}")
        if self.resampler not in RESAMPLERS:
            raise ValueError(f"unknown resampler {self.resampler!r}")
        if self.transform not in TRANSFORMS:
            raise ValueError(f"unknown transform {self.transform!r}")


@dataclass
class ParticleSet:
    particles: np.ndarray
    jitter_sd: float
    weight_sd: float
    estimate: float = field(init=False)
    degenerate_steps: int = 0
    proposal: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.particles = np.asarray(self.particles, dtype=float)
        if self.particles.ndim != 1 or self.particles.size < 2:
            raise ValueError("need a 1-d set of at least two particles")
        self.estimate = float(np.median(self.particles))

    @property
    def n(self) -> int:
        return self.particles.size

    @property
    def spread(self) -> float:
        return float(np.std(self.particles))


def resample_wheel(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Indices chosen by one spin of a wheel carrying n equally spaced pointers."""
    n = weights.size
    cumulative = np.cumsum(weights)
    cumulative /= cumulative[-1]
    pointers = (rng.random() + np.arange(n)) / n
    return np.minimum(np.searchsorted(cumulative, pointers, side="right"), n - 1)


def resample_multinomial(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return rng.choice(weights.size, size=weights.size, p=weights / weights.sum())


RESAMPLERS: dict[str, Callable] = {"wheel": resample_wheel, "multinomial": resample_multinomial}
TRANSFORMS: dict[str, Callable] = {"identity": identity, "squash": squash}


def init_particles(config: ParticleConfig, rng: np.random.Generator, clamp_bound: float = 1.0) -> ParticleSet:
    if config.init_mode == "uniform":
        particles = rng.uniform(0.0, clamp_bound, config.n)
    else:
        particles = np.clip(rng.normal(0.0, config.init_sd, config.n), 0.0, clamp_bound)
    return ParticleSet(particles, config.jitter_sd, config.weight_sd)


def pf_step(pset: ParticleSet, x: float, rng: np.random.Generator,
            transform: Callable = identity, resampler: Callable = resample_wheel) -> ParticleSet:
    """Jitter, weight against ``x``, resample and take the median."""
    proposal = pset.particles + rng.normal(0.0, 1.0, pset.n) * pset.jitter_sd
    z = (x - transform(proposal)) / pset.weight_sd
    weights = np.exp(-0.5 * z * z) / (pset.weight_sd * math.sqrt(2.0 * math.pi))
    degenerate = pset.degenerate_steps
    total = weights.sum()
    if not (np.isfinite(total) and total > 0):
        weights = np.full(pset.n, 1.0 / pset.n)
        degenerate += 1
    else:
        weights = weights / total
    chosen = proposal[resampler(weights, rng)]
    return ParticleSet(chosen, pset.jitter_sd, pset.weight_sd, degenerate_steps=degenerate, proposal=proposal)


class ParticleTracker:
    """Bootstrap particle filter on one channel with its own random stream."""

    name = "PF"

    def __init__(self, channel: ObservationChannel | ChannelKind | str,
                 config: ParticleConfig | None = None, rng: np.random.Generator | int | None = None):
        self.channel = channel if isinstance(channel, ObservationChannel) else ObservationChannel(channel)
        self.config = config or ParticleConfig()
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.pset = init_particles(self.config, self.rng, self.channel.clamp_bound)
        self._transform = TRANSFORMS[self.config.transform]
        self._resampler = RESAMPLERS[self.config.resampler]
        self.updates = 0

    @property
    def estimate(self) -> float | None:
        return None if self.updates == 0 else self.pset.estimate

    @property
    def spread(self) -> float | None:
        return None if self.updates == 0 else self.pset.spread

    def update(self, x: float) -> float:
        self.pset = pf_step(self.pset, x, self.rng, self._transform, self._resampler)
        self.updates += 1
        return self.pset.estimate


# -- raw (L, T, M) pre-filter ------------------------------------------------

def filter_raw_observation(states: tuple[KalmanState, KalmanState, KalmanState],
                           obs: CycleObservation) -> tuple[tuple[KalmanState, ...], CycleObservation]:
    """Kalman-smooth l, t and m; returns the new states and the smoothed observation.

    Cycles without a CV pass through unchanged.
    """
    if obs.empty:
        return tuple(states), obs
    kl, kt, km = (kf_update(s, x) for s, x in zip(states, (obs.l, obs.t, obs.m)))
    l = max(int(round(kl.mu)), 0)
    m = min(max(int(round(km.mu)), 0), l)
    if l > 0 and m == 0:
        m = 1
    t = min(max(kt.mu, 0.0), obs.red)
    if l == 0:
        t = 0.0
    return (kl, kt, km), replace(obs, l=l, t=t, m=m)


class RawObservationFilter:
    """Stateful wrapper around :func:`filter_raw_observation`."""

    def __init__(self, S0: float = 1.0, s: float = 1.0):
        self.S0, self.s = S0, s
        self.states: tuple[KalmanState, ...] | None = None

    def __call__(self, obs: CycleObservation) -> CycleObservation:
        if obs.empty:
            return obs
        if self.states is None:
            self.states = tuple(KalmanState(float(x), self.S0, self.s) for x in (obs.l, obs.t, obs.m))
            return obs
        self.states, filtered = filter_raw_observation(self.states, obs)
        return filtered

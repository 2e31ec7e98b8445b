"""Point-queue simulation of one signalized approach seen through connected vehicles.

Each cycle starts with red.  Vehicles arrive as a homogeneous Poisson process;
during green the queue discharges one vehicle per saturation headway.  Every
vehicle is independently connected (a CV) with the current penetration rate and
keeps that identity while it waits through more than one cycle.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_HEADWAY = 1.854

# Arrival rates (veh/s) and the volume-to-capacity ratios they produce on a
# 90 s cycle with 45 s of green and the default headway.
LAMBDA_GRID = (0.163, 0.190, 0.218, 0.239, 0.267)
RHO_GRID = (0.60, 0.70, 0.80, 0.89, 0.99)
RHO_TO_LAMBDA = dict(zip(RHO_GRID, LAMBDA_GRID))
P_GRID = (0.001, 0.05, 0.10, 0.20, 0.30, 0.40, 0.50, 0.60, 0.70, 0.80, 0.90)


@dataclass(frozen=True)
class SignalTiming:
    cycle_length: float = 90.0
    red: float = 45.0
    green: float = 45.0
    saturation_headway: float = DEFAULT_HEADWAY

    def __post_init__(self):
        for name in ("cycle_length", "red", "green", "saturation_headway"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value!r}")
        if not math.isclose(self.red + self.green, self.cycle_length, rel_tol=0, abs_tol=1e-9):
            raise ValueError("red + green must equal cycle_length")

    @property
    def capacity(self) -> float:
        """Nominal discharge capacity in veh/s."""
        return (self.green / self.saturation_headway) / self.cycle_length

    @property
    def departure_slots(self) -> np.ndarray:
        """Discharge instants within green, measured from the start of green."""
        count = math.ceil(self.green / self.saturation_headway - 1e-12)
        return np.arange(count) * self.saturation_headway


@dataclass(frozen=True)
class TrafficParams:
    """Arrival rate ``lam`` (veh/s) and penetration rate ``p``; ``rho`` is derived."""

    lam: float
    p: float
    timing: SignalTiming = field(default_factory=SignalTiming)
    rho: float = field(init=False)

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"arrival rate must be positive, got {self.lam!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"penetration rate must lie in [0, 1], got {self.p!r}")
        object.__setattr__(self, "rho", volume_to_capacity(self.lam, self.timing))

    @classmethod
    def from_rho(cls, rho: float, p: float, timing: SignalTiming | None = None) -> "TrafficParams":
        timing = timing or SignalTiming()
        return cls(rho * timing.capacity, p, timing)


def volume_to_capacity(lam: float, timing: SignalTiming) -> float:
    return lam * timing.cycle_length / (timing.green / timing.saturation_headway)


@dataclass(frozen=True)
class TrueCycleState:
    cycle_index: int
    residual_in: int
    red_arrivals: int
    n_end_of_red: int
    residual_out: int
    arrival_times: tuple[float, ...]
    green_arrivals: int = 0
    departures: int = 0


@dataclass(frozen=True)
class CycleObservation:
    """What the connected vehicles reveal at the end of red.

    ``l`` is the queue position of the farthest CV, ``t`` its queue-joining
    time since the start of red (0 for a CV left over from the previous
    cycle) and ``m`` the number of CVs in the queue.
    """

    cycle_index: int
    l: int
    t: float
    m: int
    red: float

    def __post_init__(self):
        if not 0 <= self.m <= self.l:
            raise ValueError(f"need 0 <= m <= l, got m={self.m}, l={self.l}")
        if (self.m == 0) != (self.l == 0):
            raise ValueError("m == 0 exactly when l == 0")
        if not -1e-12 <= self.t <= self.red + 1e-12:
            raise ValueError(f"t={self.t} outside [0, red={self.red}]")

    @property
    def empty(self) -> bool:
        return self.l == 0


@dataclass(frozen=True)
class Block:
    duration: float
    lam: float
    p: float


@dataclass(frozen=True)
class ScenarioSchedule:
    """Piecewise-constant (lam, p) regimes played back to back."""

    blocks: tuple[Block, ...]
    timing: SignalTiming = field(default_factory=SignalTiming)
    label: str = "scenario"

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if not self.blocks:
            raise ValueError("schedule needs at least one block")
        for block in self.blocks:
            cycles = block.duration / self.timing.cycle_length
            if block.duration <= 0 or abs(cycles - round(cycles)) > 1e-9:
                raise ValueError(
                    f"block duration {block.duration} s is not a whole number of "
                    f"{self.timing.cycle_length} s cycles"
                )
            TrafficParams(block.lam, block.p, self.timing)

    @classmethod
    def fixed(cls, lam: float, p: float, cycles: int, timing: SignalTiming | None = None,
              label: str | None = None) -> "ScenarioSchedule":
        timing = timing or SignalTiming()
        label = label or f"lam{lam:g}_p{p:g}"
        return cls((Block(cycles * timing.cycle_length, lam, p),), timing, label)

    @property
    def block_cycles(self) -> list[int]:
        return [round(b.duration / self.timing.cycle_length) for b in self.blocks]

    @property
    def n_cycles(self) -> int:
        return sum(self.block_cycles)

    def cycle_params(self) -> list[TrafficParams]:
        """True parameters for every cycle, in order."""
        out = []
        for block, k in zip(self.blocks, self.block_cycles):
            out.extend([TrafficParams(block.lam, block.p, self.timing)] * k)
        return out


def simulate_cycle(residual_in: int, params: TrafficParams, timing: SignalTiming,
                   rng: np.random.Generator, cycle_index: int = 0) -> TrueCycleState:
    if residual_in < 0:
        raise ValueError("residual queue cannot be negative")
    red_arrivals = int(rng.poisson(params.lam * timing.red))
    arrival_times = np.sort(rng.uniform(0.0, timing.red, red_arrivals))
    n_end_of_red = residual_in + red_arrivals

    green_arrivals = int(rng.poisson(params.lam * timing.green))
    green_times = np.sort(rng.uniform(0.0, timing.green, green_arrivals))

    # FIFO discharge: a slot serves a vehicle only if one has arrived by then.
    slots = timing.departure_slots
    arrived = n_end_of_red + np.searchsorted(green_times, slots, side="right")
    departures = 0
    for available in arrived:
        if available > departures:
            departures += 1
    residual_out = n_end_of_red + green_arrivals - departures

    return TrueCycleState(
        cycle_index=cycle_index,
        residual_in=residual_in,
        red_arrivals=red_arrivals,
        n_end_of_red=n_end_of_red,
        residual_out=residual_out,
        arrival_times=tuple(arrival_times.tolist()),
        green_arrivals=green_arrivals,
        departures=departures,
    )


def draw_cv_flags(state: TrueCycleState, p: float, rng: np.random.Generator,
                  carried: Sequence[bool] | None = None) -> np.ndarray:
    """CV flags for the queued vehicles, front of the queue first.

    ``carried`` holds the flags of the residual vehicles (they keep their
    identity); without it residual vehicles are drawn afresh.
    """
    if carried is not None and len(carried) != state.residual_in:
        raise ValueError("carried flags must match the residual queue")
    if carried is None:
        carried = rng.random(state.residual_in) < p
    fresh = rng.random(state.red_arrivals) < p
    return np.concatenate([np.asarray(carried, dtype=bool), fresh])


def observe_queue(state: TrueCycleState, flags: np.ndarray, red: float) -> CycleObservation:
    cv_positions = np.flatnonzero(flags)
    if cv_positions.size == 0:
        return CycleObservation(state.cycle_index, 0, 0.0, 0, red)
    last = int(cv_positions[-1])
    t = 0.0 if last < state.residual_in else state.arrival_times[last - state.residual_in]
    return CycleObservation(state.cycle_index, last + 1, float(t), int(cv_positions.size), red)


def sample_cv(state: TrueCycleState, p: float, rng: np.random.Generator,
              red: float = 45.0, carried: Sequence[bool] | None = None) -> CycleObservation:
    flags = draw_cv_flags(state, p, rng, carried)
    return observe_queue(state, flags, red)


def run_scenario(schedule: ScenarioSchedule, seed: int
                 ) -> tuple[list[TrueCycleState], list[CycleObservation]]:
    """Simulate every cycle of ``schedule``; the same seed gives the same trace."""
    rng = np.random.default_rng(seed)
    timing = schedule.timing
    states: list[TrueCycleState] = []
    observations: list[CycleObservation] = []
    carried = np.zeros(0, dtype=bool)
    residual = 0
    for index, params in enumerate(schedule.cycle_params()):
        state = simulate_cycle(residual, params, timing, rng, cycle_index=index)
        flags = draw_cv_flags(state, params.p, rng, carried)
        observations.append(observe_queue(state, flags, timing.red))
        states.append(state)

        green_flags = rng.random(state.green_arrivals) < params.p
        everyone = np.concatenate([flags, green_flags])
        carried = everyone[everyone.size - state.residual_out:]
        residual = state.residual_out
    return states, observations


TRACE_COLUMNS = ("cycle_index", "residual_in", "red_arrivals", "N", "l", "t", "m")


def write_trace_csv(path: str | Path, states: Iterable[TrueCycleState],
                    observations: Iterable[CycleObservation]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for state, obs in zip(states, observations):
            if state.cycle_index != obs.cycle_index:
                raise ValueError("states and observations are not aligned")
            writer.writerow([state.cycle_index, state.residual_in, state.red_arrivals,
                             state.n_end_of_red, obs.l, repr(float(obs.t)), obs.m])
    return path


def read_trace_csv(path: str | Path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [
        {
            "cycle_index": int(r["cycle_index"]),
            "residual_in": int(r["residual_in"]),
            "red_arrivals": int(r["red_arrivals"]),
            "N": int(r["N"]),
            "l": int(r["l"]),
            "t": float(r["t"]),
            "m": int(r["m"]),
        }
        for r in rows
    ]

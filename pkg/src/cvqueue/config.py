"""Run configuration: a versioned JSON document plus the presets shipped with the package."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any

from .estimators import FallbackMode
from .filters import ChannelKind, KalmanConfig, ParticleConfig
from .harness import ESTIMATORS, PipelineConfig, dynamic_scenarios
from .simulation import Block, ScenarioSchedule, SignalTiming

SCHEMA = "cvqueue.run/1"
FORMATS = ("csv", "svg")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    lambdas: tuple[float, ...]
    ps: tuple[float, ...]
    cycles: int = 100

    def __post_init__(self):
        object.__setattr__(self, "lambdas", tuple(float(x) for x in self.lambdas))
        object.__setattr__(self, "ps", tuple(float(x) for x in self.ps))
        if not self.lambdas or not self.ps:
            raise ConfigError("sweep grids must be non-empty")
        if self.cycles < 2:
            raise ConfigError("a sweep cell needs at least two cycles")

    @property
    def cells(self) -> int:
        return len(self.lambdas) * len(self.ps)


@dataclass(frozen=True)
class RunConfig:
    schedule: ScenarioSchedule = field(default_factory=lambda: ScenarioSchedule.fixed(0.218, 0.2, 50))
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    sweep: SweepSpec | None = None
    seeds: tuple[int, ...] = (1,)
    out: str = "out"
    formats: tuple[str, ...] = ("csv",)
    workers: int = 1
    bench_cycles: int = 1000
    schema: str = SCHEMA

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "formats", tuple(self.formats))
        if self.schema != SCHEMA:
            raise ConfigError(f"unsupported schema {self.schema!r}; expected {SCHEMA!r}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        bad = set(self.formats) - set(FORMATS)
        if bad or not self.formats:
            raise ConfigError(f"formats must be drawn from {FORMATS}, got {self.formats}")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.bench_cycles < 1:
            raise ConfigError("bench needs at least one cycle")


# -- (de)serialisation -------------------------------------------------------

def _plain(obj) -> dict:
    return {f.name: getattr(obj, f.name) for f in fields(obj) if f.init}


def _schedule_to_dict(s: ScenarioSchedule) -> dict:
    return {
        "label": s.label,
        "timing": _plain(s.timing),
        "blocks": [_plain(b) for b in s.blocks],
    }


def _schedule_from_dict(d: dict) -> ScenarioSchedule:
    timing = SignalTiming(**d.get("timing", {}))
    if "catalog" in d:
        return dynamic_scenarios(d["catalog"], timing)
    if "blocks" in d:
        blocks = tuple(Block(float(b["duration"]), float(b["lam"]), float(b["p"])) for b in d["blocks"])
        return ScenarioSchedule(blocks, timing, d.get("label", "scenario"))
    try:
        return ScenarioSchedule.fixed(float(d["lam"]), float(d["p"]), int(d["cycles"]), timing, d.get("label"))
    except KeyError as exc:
        raise ConfigError(f"schedule needs 'catalog', 'blocks' or lam/p/cycles (missing {exc})") from None


def _pipeline_to_dict(p: PipelineConfig) -> dict:
    return {
        "estimators": list(p.estimators),
        "fallback": p.fallback.value,
        "lambda_channel": p.lambda_channel.value,
        "p_channel": p.p_channel.value,
        "kalman": _plain(p.kalman),
        "particle_lambda": _plain(p.particle_lambda),
        "particle_p": _plain(p.particle_p),
        "raw_prefilter": p.raw_prefilter,
        "warmup": p.warmup,
    }


def _pipeline_from_dict(d: dict) -> PipelineConfig:
    defaults = PipelineConfig()
    return PipelineConfig(
        estimators=tuple(d.get("estimators", ESTIMATORS)),
        fallback=FallbackMode(d.get("fallback", defaults.fallback.value)),
        lambda_channel=ChannelKind(d.get("lambda_channel", defaults.lambda_channel.value)),
        p_channel=ChannelKind(d.get("p_channel", defaults.p_channel.value)),
        kalman=KalmanConfig(**d.get("kalman", {})),
        particle_lambda=ParticleConfig(**{**_plain(defaults.particle_lambda), **d.get("particle_lambda", {})}),
        particle_p=ParticleConfig(**{**_plain(defaults.particle_p), **d.get("particle_p", {})}),
        raw_prefilter=bool(d.get("raw_prefilter", False)),
        warmup=int(d.get("warmup", 0)),
    )


def to_dict(config: RunConfig) -> dict:
    out = {
        "schema": config.schema,
        "schedule": _schedule_to_dict(config.schedule),
        "pipeline": _pipeline_to_dict(config.pipeline),
        "seeds": list(config.seeds),
        "out": config.out,
        "formats": list(config.formats),
        "workers": config.workers,
        "bench_cycles": config.bench_cycles,
    }
    if config.sweep is not None:
        out["sweep"] = {"lambdas": list(config.sweep.lambdas), "ps": list(config.sweep.ps),
                        "cycles": config.sweep.cycles}
    return out


def from_dict(d: dict[str, Any]) -> RunConfig:
    known = {"schema", "schedule", "pipeline", "sweep", "seeds", "out", "formats", "workers", "bench_cycles"}
    extra = set(d) - known
    if extra:
        raise ConfigError(f"unknown config keys: {sorted(extra)}")
    try:
        sweep = d.get("sweep")
        return RunConfig(
            schema=d.get("schema", SCHEMA),
            schedule=_schedule_from_dict(d["schedule"]) if "schedule" in d else RunConfig().schedule,
            pipeline=_pipeline_from_dict(d.get("pipeline", {})),
            sweep=SweepSpec(sweep["lambdas"], sweep["ps"], int(sweep.get("cycles", 100))) if sweep else None,
            seeds=tuple(d.get("seeds", (1,))),
            out=str(d.get("out", "out")),
            formats=tuple(d.get("formats", ("csv",))),
            workers=int(d.get("workers", 1)),
            bench_cycles=int(d.get("bench_cycles", 1000)),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def dumps(config: RunConfig) -> str:
    return json.dumps(to_dict(config), indent=2, sort_keys=True) + "\n"


def loads(text: str) -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return from_dict(data)


def load(path: str | Path) -> RunConfig:
    return loads(Path(path).read_text(encoding="utf-8"))


def preset_names() -> list[str]:
    files = resources.files("cvqueue").joinpath("presets").iterdir()
    return sorted(p.name[:-5] for p in files if p.name.endswith(".json"))


def load_preset(name: str) -> RunConfig:
    target = resources.files("cvqueue").joinpath("presets", f"{name}.json")
    if not target.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {preset_names()}")
    return loads(target.read_text(encoding="utf-8"))

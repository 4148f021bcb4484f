"""Single-document TOML run configuration, validated against every module."""

from __future__ import annotations

import datetime as dt
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from drsandbox import SandboxError
from drsandbox.alignment import QualityWeights
from drsandbox.policyopt import TrainConfig
from drsandbox.rewards import ScheduleConfig
from drsandbox.searchenv import Limits, ToolLayerConfig

STAGES = ("synth", "rollout", "train", "align", "research", "eval")


class ConfigError(SandboxError):
    pass


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    stages: tuple[str, ...] = STAGES
    out_dir: str = "runs/default"


@dataclass(frozen=True)
class SynthSection:
    graph: str = ""  # path to a graph JSON file; empty uses the bundled graph
    hops: int = 2
    train_count: int = 200
    heldout_count: int = 50
    seed: int = 11


@dataclass(frozen=True)
class EnvSection:
    max_steps: int = 8
    max_context_units: int = 100_000
    top_k: int = 3
    max_retries: int = 2
    rate_limit: int = 16
    cache_capacity: int = 256
    failure_rate: float = 0.0


@dataclass(frozen=True)
class RolloutSection:
    policy: str = "uniform"  # uniform | chain
    count: int = 20


@dataclass(frozen=True)
class TrainSection:
    objective: str = "grpo"
    steps: int = 300
    batch_queries: int = 8
    group_size: int = 8
    lr: float = 2.0
    beta: float = 1e-3
    eps: float = 0.2
    eps_low: float = 0.2
    eps_high: float = 0.28
    init_scale: float = 0.1
    metric_window: int = 10
    data_schedule: bool = True
    data_interval: int = 10
    gamma: float = 0.5


@dataclass(frozen=True)
class ScheduleSection:
    tool_success_rate: float = 0.9
    format_rate: float = 0.95
    prm_mean: float = 0.7
    release: float = 2.0 / 3.0
    format_to_prm: float = 0.5
    prm_to_orm: float = 0.5


@dataclass(frozen=True)
class AlignSection:
    inputs: int = 8
    K: int = 6
    beta: float = 0.1
    dpo_steps: int = 50
    sft_steps: int = 20
    lr: float = 0.5
    hi_pct: float = 70.0
    lo_pct: float = 30.0
    w_judge: float = 1.0
    lambda_f: float = 0.1
    lambda_c: float = 0.1
    temporal_penalty: float = 0.05
    tau: float = 0.3


@dataclass(frozen=True)
class ResearchSection:
    backend: str = "surrogate_policy"
    parallelism: int = 4
    subtasks: int = 3
    queries: int = 2


@dataclass(frozen=True)
class EvalSection:
    now: str = "2026-01-01"


_SECTIONS = {
    "run": RunSection, "synth": SynthSection, "env": EnvSection, "rollout": RolloutSection, "train": TrainSection,
    "schedule": ScheduleSection, "align": AlignSection, "research": ResearchSection, "eval": EvalSection,
}


@dataclass(frozen=True)
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    synth: SynthSection = field(default_factory=SynthSection)
    env: EnvSection = field(default_factory=EnvSection)
    rollout: RolloutSection = field(default_factory=RolloutSection)
    train: TrainSection = field(default_factory=TrainSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    align: AlignSection = field(default_factory=AlignSection)
    research: ResearchSection = field(default_factory=ResearchSection)
    eval: EvalSection = field(default_factory=EvalSection)

    # ---- module configs ----

    def tool_config(self) -> ToolLayerConfig:
        e = self.env
        return ToolLayerConfig(e.max_retries, e.cache_capacity, e.failure_rate, e.rate_limit, e.top_k)

    def limits(self) -> Limits:
        return Limits(self.env.max_steps, self.env.max_context_units)

    def schedule_config(self) -> ScheduleConfig:
        s = self.schedule
        return ScheduleConfig(
            {"tool_success_rate": s.tool_success_rate, "format_rate": s.format_rate, "prm_mean": s.prm_mean},
            s.release, s.format_to_prm, s.prm_to_orm,
        )

    def train_config(self) -> TrainConfig:
        t = self.train
        return TrainConfig(
            t.objective, t.steps, t.batch_queries, t.group_size, t.lr, t.beta, t.eps, t.eps_low, t.eps_high,
            self.run.seed, t.init_scale, self.env.max_steps, self.schedule_config(), t.data_schedule,
            t.data_interval, t.gamma, t.metric_window,
        )

    def quality_weights(self) -> QualityWeights:
        a = self.align
        return QualityWeights(a.w_judge, a.lambda_f, a.lambda_c, a.temporal_penalty, a.tau)

    def now(self) -> dt.date:
        return dt.date.fromisoformat(self.eval.now)

    def validate(self) -> "RunConfig":
        """Build every module config so each module's own checks run up front."""
        bad = [s for s in self.run.stages if s not in STAGES]
        if bad or not self.run.stages:
            raise ConfigError(f"stages must be a non-empty subset of {STAGES}; got {list(self.run.stages)}")
        try:
            self.tool_config(), self.limits(), self.train_config(), self.quality_weights(), self.now()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        s, a, r = self.synth, self.align, self.research
        checks = [
            (s.hops in (1, 2, 3, 4, 5), "synth.hops must lie in 1..5"),
            (s.train_count >= 1 and s.heldout_count >= 1, "synth counts must be >= 1"),
            (self.rollout.policy in ("uniform", "chain"), "rollout.policy must be 'uniform' or 'chain'"),
            (self.rollout.count >= 1, "rollout.count must be >= 1"),
            (a.K >= 2 and a.inputs >= 1, "align.K must be >= 2 and align.inputs >= 1"),
            (a.beta > 0 and a.lr > 0 and a.dpo_steps >= 0 and a.sft_steps >= 0, "align optimizer settings invalid"),
            (0 <= a.lo_pct <= a.hi_pct <= 100, "need 0 <= align.lo_pct <= align.hi_pct <= 100"),
            (0 < a.tau < 1, "align.tau must lie in (0, 1)"),
            (r.backend in ("surrogate_policy", "scripted"), "research.backend must be surrogate_policy or scripted in runs"),
            (r.parallelism >= 1 and r.subtasks >= 1 and r.queries >= 1, "research counts must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self

    def to_dict(self) -> dict:
        out = {}
        for name in _SECTIONS:
            sec = getattr(self, name)
            out[name] = {f.name: (list(v) if isinstance(v := getattr(sec, f.name), tuple) else v) for f in fields(sec)}
        return out


def _coerce(cls, name: str, data: Mapping[str, Any]):
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
    kwargs = {}
    for k, v in data.items():
        default = getattr(cls(), k)
        if isinstance(default, bool):
            ok = isinstance(v, bool)
        elif isinstance(default, float):
            ok = isinstance(v, (int, float)) and not isinstance(v, bool)
            v = float(v)
        elif isinstance(default, int):
            ok = isinstance(v, int) and not isinstance(v, bool)
        elif isinstance(default, tuple):
            ok = isinstance(v, list) and all(isinstance(x, str) for x in v)
            v = tuple(v)
        else:
            ok = isinstance(v, str) or (k == "now" and isinstance(v, dt.date))
            v = v.isoformat() if isinstance(v, dt.date) else v
        if not ok:
            raise ConfigError(f"[{name}].{k} has the wrong type: {v!r}")
        kwargs[k] = v
    return cls(**kwargs)


def config_from_dict(data: Mapping[str, Any]) -> RunConfig:
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    return RunConfig(**{n: _coerce(c, n, data.get(n, {})) for n, c in _SECTIONS.items()}).validate()


def load_config(path: str | Path) -> RunConfig:
    try:
        data = tomllib.loads(Path(path).read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)


def dump_config(cfg: RunConfig) -> str:
    """TOML text for a config (flat sections of scalars and string lists)."""
    lines = []
    for name, sec in cfg.to_dict().items():
        lines.append(f"[{name}]")
        for k, v in sec.items():
            if isinstance(v, bool):
                s = "true" if v else "false"
            elif isinstance(v, str):
                s = '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
            elif isinstance(v, list):
                s = "[" + ", ".join(f'"{x}"' for x in v) + "]"
            else:
                s = repr(v)
            lines.append(f"{k} = {s}")
        lines.append("")
    return "\n".join(lines)

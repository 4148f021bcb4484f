"""Search-RL training loop: rollout groups, score, advance schedules, ascend."""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from drsandbox.kgforge.render import QueryInstance
from drsandbox.policyopt.objectives import (
    DegenerateBatch,
    TrajectoryGroup,
    dapo_objective,
    grpo_loss,
    gspo_objective,
)
from drsandbox.policyopt.policy import ActionSeq, PolicyParams
from drsandbox.rewards import (
    ScheduleConfig,
    ScheduleState,
    advance_schedule,
    orm,
    schedule_data,
    score_trajectory,
)
from drsandbox.searchenv import Limits, SearchEnv, rollout
from drsandbox.searchenv.agent import DIFFICULTIES

OBJECTIVES = ("grpo", "gspo", "dapo")


@dataclass(frozen=True)
class TrainConfig:
    objective: str = "grpo"
    steps: int = 300
    batch_queries: int = 8
    group_size: int = 8
    lr: float = 2.0
    beta: float = 1e-3
    eps: float = 0.2
    eps_low: float = 0.2
    eps_high: float = 0.28
    seed: int = 0
    init_scale: float = 0.1
    max_steps: int = 8
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    data_schedule: bool = True
    data_interval: int = 10
    gamma: float = 0.5
    metric_window: int = 10

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if self.steps < 0 or self.batch_queries < 1 or self.group_size < 2:
            raise ValueError("need steps >= 0, batch_queries >= 1, group_size >= 2")
        if self.metric_window < 1:
            raise ValueError("metric_window must be >= 1")
        if self.lr <= 0 or self.beta < 0 or self.eps <= 0 or not 0 <= self.eps_low < self.eps_high:
            raise ValueError("invalid optimizer or clip settings")


@dataclass
class TrainResult:
    params: PolicyParams
    log: list[dict]
    schedule: ScheduleState
    proportions: dict[str, float]


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def _bins(instances: Sequence[QueryInstance]) -> dict[str, list[QueryInstance]]:
    out: dict[str, list[QueryInstance]] = defaultdict(list)
    for q in instances:
        out[q.difficulty].append(q)
    return dict(out)


def _pick(rng: np.random.Generator, bins, proportions, k: int) -> list[QueryInstance]:
    names = [d for d in DIFFICULTIES if d in bins]
    p = np.array([proportions.get(d, 0.0) for d in names])
    p = p / p.sum() if p.sum() > 0 else np.full(len(names), 1 / len(names))
    chosen = rng.choice(len(names), size=k, p=p)
    return [bins[names[c]][int(rng.integers(len(bins[names[c]])))] for c in chosen]


def step_metrics(trajs, breakdowns) -> dict[str, float]:
    steps = [s for t in trajs for s in t.steps]
    return {
        "tool_success_rate": float(np.mean([s.tool_success for s in steps])),
        "format_rate": float(np.mean([s.format_valid for s in steps])),
        "prm_mean": float(np.mean([b.r_prm for b in breakdowns])),
        "orm_acc": float(np.mean([b.r_orm for b in breakdowns])),
        "total_reward": float(np.mean([b.total for b in breakdowns])),
    }


def evaluate(params: PolicyParams, instances: Sequence[QueryInstance], env: SearchEnv, limits: Limits, seed: int) -> float:
    """Sampled-policy ORM accuracy, one rollout per instance."""
    layer = env.new_layer()
    hits = [orm(rollout(params, q, env, limits, derive_seed(seed, i), layer), q).decision for i, q in enumerate(instances)]
    return float(np.mean(hits))


def train(
    cfg: TrainConfig,
    instances: Sequence[QueryInstance],
    env: SearchEnv,
    params: PolicyParams | None = None,
    ref_params: PolicyParams | None = None,
) -> TrainResult:
    """Deterministic given ``cfg.seed``; zero steps returns the initial params."""
    if not instances:
        raise ValueError("no training instances")
    params = params if params is not None else PolicyParams.random(cfg.seed, cfg.init_scale)
    ref = ref_params if ref_params is not None else params
    limits = Limits(cfg.max_steps)
    sched = ScheduleState(config=cfg.schedule)
    bins = _bins(instances)
    proportions = {d: 1.0 / len(bins) for d in DIFFICULTIES if d in bins}
    bin_hits: dict[str, list[int]] = defaultdict(list)
    rng = np.random.default_rng(derive_seed(cfg.seed, 1))
    layer = env.new_layer()
    log: list[dict] = []
    for step in range(1, cfg.steps + 1):
        batch = _pick(rng, bins, proportions, cfg.batch_queries)
        lam = sched.coefficients
        groups, trajs, breakdowns = [], [], []
        for qi, q in enumerate(batch):
            members, rewards = [], []
            for g in range(cfg.group_size):
                t = rollout(params, q, env, limits, derive_seed(cfg.seed, step, qi, g), layer)
                b = score_trajectory(t, q, lam)
                members.append(ActionSeq.from_trajectory(t))
                rewards.append(b.total)
                trajs.append(t)
                breakdowns.append(b)
                bin_hits[q.difficulty].append(b.r_orm)
            groups.append(TrajectoryGroup(q.id, tuple(members), np.array(rewards)))
        if cfg.objective == "grpo":
            rep = grpo_loss(params, ref, groups, cfg.beta)
        elif cfg.objective == "gspo":
            rep = gspo_objective(params, None, groups, cfg.eps)
        else:
            try:
                rep = dapo_objective(params, None, groups, cfg.eps_low, cfg.eps_high)
            except DegenerateBatch:
                rep = None
        if rep is not None:
            params = params.with_weights(params.weights + cfg.lr * rep.ascent())
        m = step_metrics(trajs, breakdowns)
        log.append({"step": step, "phase": sched.phase, **m, **dict(zip(("lambda_tool", "lambda_format", "lambda_prm", "lambda_orm"), lam.as_tuple()))})
        # schedule triggers read a trailing mean so one lucky batch cannot fire a transition
        recent = log[-cfg.metric_window:]
        smoothed = {k: float(np.mean([r[k] for r in recent])) for k in ("tool_success_rate", "format_rate", "prm_mean", "orm_acc")}
        sched = advance_schedule(sched, smoothed)
        if cfg.data_schedule and step % cfg.data_interval == 0 and len(proportions) > 1:
            acc = {d: float(np.mean(v)) for d, v in bin_hits.items() if v}
            proportions = schedule_data(acc, proportions, cfg.gamma)
            bin_hits.clear()
    return TrainResult(params, log, sched, proportions)


LOG_FIELDS = (
    "step", "phase", "orm_acc", "prm_mean", "tool_success_rate", "format_rate", "total_reward",
    "lambda_tool", "lambda_format", "lambda_prm", "lambda_orm",
)


def write_metrics_csv(log: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_FIELDS, extrasaction="ignore")
        w.writeheader()
        for row in log:
            w.writerow({k: (f"{v:.12g}" if isinstance(v, float) else v) for k, v in row.items()})

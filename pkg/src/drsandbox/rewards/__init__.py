"""Search-RL reward signals and their schedules."""

from drsandbox.rewards.schedule import (
    METRICS,
    PHASES,
    ScheduleConfig,
    ScheduleState,
    advance_schedule,
    schedule_data,
    write_schedule_csv,
)
from drsandbox.rewards.signals import (
    INITIAL_COEFFICIENTS,
    ORM_CAP,
    CoefficientVector,
    EmptyEntitySet,
    JudgeUnavailable,
    JudgeVerdict,
    RemoteJudge,
    RewardBreakdown,
    composite,
    exact_match_judge,
    format_reward,
    orm,
    prm,
    score_trajectory,
    tool_reward,
)

__all__ = [name for name in dir() if not name.startswith("_")]

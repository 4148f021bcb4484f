"""Threshold-triggered reward-coefficient schedule and difficulty-bin data schedule."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

from drsandbox.rewards.signals import INITIAL_COEFFICIENTS, ORM_CAP, CoefficientVector

PHASES = ("P0_tool_focus", "P1_prm_focus", "P2_orm_focus", "P3_terminal")
# metric that must reach its threshold to leave each non-terminal phase
TRIGGER = {"P0_tool_focus": "tool_success_rate", "P1_prm_focus": "format_rate", "P2_orm_focus": "prm_mean"}
METRICS = ("tool_success_rate", "format_rate", "prm_mean", "orm_acc")


@dataclass(frozen=True)
class ScheduleConfig:
    """Transfer amounts for each transition.

    ``release`` is the fraction of the outgoing weight freed at P0->P1 (tool)
    and P1->P2 (format). ``format_to_prm`` is the PRM share of the format
    release (the rest goes to ORM). ``prm_to_orm`` is the fraction of the PRM
    weight moved to ORM at P2->P3; ORM never exceeds its cap.
    """

    thresholds: Mapping[str, float] = field(
        default_factory=lambda: {"tool_success_rate": 0.9, "format_rate": 0.95, "prm_mean": 0.7}
    )
    release: float = 2.0 / 3.0
    format_to_prm: float = 0.5
    prm_to_orm: float = 0.5

    def __post_init__(self):
        for name in ("release", "format_to_prm", "prm_to_orm"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if set(self.thresholds) != set(TRIGGER.values()):
            raise ValueError(f"thresholds must cover exactly {sorted(TRIGGER.values())}")


@dataclass(frozen=True)
class ScheduleState:
    phase: str = PHASES[0]
    coefficients: CoefficientVector = INITIAL_COEFFICIENTS
    config: ScheduleConfig = field(default_factory=ScheduleConfig)
    step: int = 0
    history: tuple[tuple[int, str, str], ...] = ()

    @property
    def thresholds(self) -> Mapping[str, float]:
        return self.config.thresholds


def _transition(lam: CoefficientVector, phase: str, cfg: ScheduleConfig) -> CoefficientVector:
    t, f, p, o = lam.as_tuple()
    if phase == "P0_tool_focus":
        freed = t * cfg.release
        t, p = t - freed, p + freed
    elif phase == "P1_prm_focus":
        freed = f * cfg.release
        to_orm = min(freed * (1 - cfg.format_to_prm), ORM_CAP - o)
        f, p, o = f - freed, p + freed - to_orm, o + to_orm
    elif phase == "P2_orm_focus":
        moved = min(p * cfg.prm_to_orm, ORM_CAP - o)
        p, o = p - moved, o + moved
    # absorb float drift into the largest component so the sum stays exact to 1e-15
    vals = [t, f, p, o]
    k = max(range(3), key=lambda i: vals[i])
    vals[k] += 1.0 - sum(vals)
    return CoefficientVector(*vals)


def advance_schedule(state: ScheduleState, metrics: Mapping[str, float]) -> ScheduleState:
    """Advance at most one phase when the current phase's trigger metric crosses its threshold."""
    for name, v in metrics.items():
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"metric {name}={v} outside [0, 1]")
    step = state.step + 1
    if state.phase == PHASES[-1]:
        return replace(state, step=step)
    trig = TRIGGER[state.phase]
    if metrics.get(trig, 0.0) < state.config.thresholds[trig]:
        return replace(state, step=step)
    nxt = PHASES[PHASES.index(state.phase) + 1]
    return replace(
        state,
        phase=nxt,
        coefficients=_transition(state.coefficients, state.phase, state.config),
        step=step,
        history=state.history + ((step, state.phase, nxt),),
    )


def write_schedule_csv(rows, path: str | Path) -> None:
    """rows: iterable of (step, ScheduleState)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "phase", "lambda_tool", "lambda_format", "lambda_prm", "lambda_orm"])
        for step, st in rows:
            w.writerow([step, st.phase, *(f"{x:.12g}" for x in st.coefficients.as_tuple())])


def schedule_data(
    bin_accuracies: Mapping[str, float],
    proportions: Mapping[str, float],
    gamma: float = 0.5,
    band: tuple[float, float] = (0.1, 0.5),
) -> dict[str, float]:
    """Shrink bins whose accuracy falls outside ``band`` by ``gamma`` and give the
    released mass to in-band bins in proportion to their current share.

    Bins without an accuracy reading keep their share. With no in-band bin,
    or none outside, the proportions are returned unchanged.
    """
    total = sum(proportions.values())
    if abs(total - 1.0) > 1e-9:
        raise ValueError("proportions must sum to 1")
    lo, hi = band
    out_band = [b for b in proportions if b in bin_accuracies and not lo <= bin_accuracies[b] <= hi]
    in_band = [b for b in proportions if b in bin_accuracies and lo <= bin_accuracies[b] <= hi]
    new = dict(proportions)
    if not out_band or not in_band:
        return new
    freed = 0.0
    for b in out_band:
        freed += new[b] * (1 - gamma)
        new[b] *= gamma
    mass = sum(proportions[b] for b in in_band)
    for b in in_band:
        new[b] += freed * (proportions[b] / mass if mass > 0 else 1.0 / len(in_band))
    z = sum(new.values())
    return {b: v / z for b, v in new.items()}

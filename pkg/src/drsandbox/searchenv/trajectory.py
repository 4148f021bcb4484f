"""Steps, trajectories, action emissions and JSON Lines persistence."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from drsandbox.searchenv.tools import TOOLS, Observation, ToolCall

_CALL = re.compile(r"<tool_call>(.*?)</tool_call>", re.S)


def emit(tool: str, argument: str) -> str:
    """Raw emission for one action, in the format the parser accepts."""
    return "<tool_call>" + json.dumps({"tool": tool, "argument": argument}, ensure_ascii=False) + "</tool_call>"


def parse_emission(raw: str, step_index: int = 1) -> ToolCall | None:
    blocks = _CALL.findall(raw)
    if len(blocks) != 1 or raw.count("<tool_call>") != 1:
        return None
    try:
        obj = json.loads(blocks[0])
    except json.JSONDecodeError:
        return None
    if not isinstance(obj, dict) or obj.get("tool") not in TOOLS:
        return None
    arg = obj.get("argument", "")
    if not isinstance(arg, str):
        return None
    if obj["tool"] != "reflect" and not arg.strip():
        return None
    return ToolCall(obj["tool"], arg, step_index)


def step_format_valid(raw: str) -> bool:
    """Exactly one well-formed tool call with its required fields."""
    return parse_emission(raw) is not None


@dataclass(frozen=True)
class Step:
    thought: str
    action: ToolCall
    observation: Observation
    format_valid: bool
    tool_success: int
    action_id: int | None = None
    features: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.tool_success != int(self.observation.status == "ok"):
            raise ValueError("tool_success must equal 1 iff the observation is ok")

    def to_dict(self) -> dict:
        d = {
            "thought": self.thought, "action": self.action.to_dict(),
            "observation": self.observation.to_dict(), "format_valid": self.format_valid,
            "tool_success": self.tool_success, "action_id": self.action_id,
        }
        if self.features is not None:
            d["features"] = list(self.features)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Step":
        a = d["action"]
        feats = d.get("features")
        return cls(
            d["thought"], ToolCall(a["tool"], a["argument"], a.get("step_index", 1)),
            Observation.from_dict(d["observation"]), bool(d["format_valid"]), int(d["tool_success"]),
            d.get("action_id"), tuple(feats) if feats is not None else None,
        )


@dataclass(frozen=True)
class Trajectory:
    query_id: str
    steps: tuple[Step, ...]
    final_answer: str | None = None
    seed: int = 0
    action_log_probs: tuple[float, ...] | None = None
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if not self.steps:
            raise ValueError("a trajectory has at least one step")
        answers = [i for i, s in enumerate(self.steps) if s.action.tool == "answer" and s.format_valid]
        if len(answers) > 1 or (answers and answers[0] != len(self.steps) - 1):
            raise ValueError("at most one answer action, and only as the final step")
        if self.action_log_probs is not None and len(self.action_log_probs) != len(self.steps):
            raise ValueError("action_log_probs must have one entry per step")

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def action_ids(self) -> list[int]:
        return [s.action_id for s in self.steps]

    def to_record(self) -> dict:
        return {
            "query_id": self.query_id, "seed": self.seed, "final_answer": self.final_answer,
            "steps": [s.to_dict() for s in self.steps],
            "action_log_probs": list(self.action_log_probs) if self.action_log_probs is not None else None,
            "meta": dict(self.meta),
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "Trajectory":
        lp = rec.get("action_log_probs")
        return cls(
            rec["query_id"], tuple(Step.from_dict(s) for s in rec["steps"]), rec.get("final_answer"),
            rec.get("seed", 0), tuple(lp) if lp is not None else None, rec.get("meta", {}),
        )


def write_trajectories(trajs: Iterable[Trajectory], path: str | Path, extra: Iterable[Mapping] | None = None) -> None:
    extras = list(extra) if extra is not None else None
    with open(path, "w", encoding="utf-8") as fh:
        for i, t in enumerate(trajs):
            rec = t.to_record()
            if extras is not None:
                rec.update(extras[i])
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def read_trajectories(path: str | Path) -> list[Trajectory]:
    with open(path, encoding="utf-8") as fh:
        return [Trajectory.from_record(json.loads(line)) for line in fh if line.strip()]

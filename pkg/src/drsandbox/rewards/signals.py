"""Step rewards, entity-coverage PRM, majority-vote ORM and the composite reward."""

from __future__ import annotations

import os
import time
from dataclasses import dataclass
from typing import Protocol, Sequence

from drsandbox import SandboxError
from drsandbox.kgforge.render import QueryInstance
from drsandbox.searchenv.trajectory import Trajectory
from drsandbox.text import contains, normalize

TOOL_OK, TOOL_ISOLATED, TOOL_CONSECUTIVE = 0.1, -0.1, -0.2
FORMAT_OK, FORMAT_BAD = 0.1, -0.2
ORM_CAP = 0.5


class EmptyEntitySet(SandboxError):
    pass


class JudgeUnavailable(SandboxError):
    pass


def tool_reward(success_flags: Sequence[int]) -> list[float]:
    """Per-step tool reward; the step before the first counts as a success."""
    if len(success_flags) == 0:
        raise ValueError("need at least one step")
    out, prev = [], 1
    for c in success_flags:
        if c:
            out.append(TOOL_OK)
        else:
            out.append(TOOL_CONSECUTIVE if prev == 0 else TOOL_ISOLATED)
        prev = int(bool(c))
    return out


def format_reward(format_flags: Sequence[bool]) -> list[float]:
    if len(format_flags) == 0:
        raise ValueError("need at least one step")
    return [FORMAT_OK if f else FORMAT_BAD for f in format_flags]


def prm(trajectory: Trajectory, entities: Sequence[str]) -> float:
    """Fraction of key entities named in any thought or observation."""
    if not entities:
        raise EmptyEntitySet("entity set is empty")
    texts = [s.thought + "\n" + s.observation.payload for s in trajectory.steps]
    covered = sum(any(contains(t, e) for t in texts) for e in entities)
    return covered / len(entities)


# ---- outcome judges ---------------------------------------------------------


class Judge(Protocol):
    def __call__(self, question: str, reference: str, prediction: str) -> tuple[int, str]: ...


def exact_match_judge(question: str, reference: str, prediction: str) -> tuple[int, str]:
    hit = normalize(prediction) == normalize(reference)
    return int(hit), "normalized exact match" if hit else "answer differs from reference"


@dataclass(frozen=True)
class JudgeVerdict:
    votes: tuple[tuple[int, str], ...]
    decision: int

    def __post_init__(self):
        if len(self.votes) != 3 or any(v not in (0, 1) for v, _ in self.votes):
            raise ValueError("a verdict holds exactly three binary votes")
        if self.decision != int(sum(v for v, _ in self.votes) >= 2):
            raise ValueError("decision must be the majority vote")

    @classmethod
    def from_votes(cls, votes) -> "JudgeVerdict":
        votes = tuple((int(v), str(r)) for v, r in votes)
        return cls(votes, int(sum(v for v, _ in votes) >= 2))


@dataclass
class RemoteJudge:
    """Binary correctness judge behind a chat-completion style HTTP endpoint.

    The endpoint receives ``{"model", "messages"}`` and must answer with a
    first choice whose content starts with ``1`` or ``0``.
    """

    endpoint: str
    model: str = "judge"
    api_key_env: str = "DRSANDBOX_JUDGE_KEY"
    retries: int = 2
    timeout: float = 30.0
    backoff: float = 0.5

    def __call__(self, question: str, reference: str, prediction: str) -> tuple[int, str]:
        import httpx

        prompt = (
            "Decide whether the predicted answer matches the reference answer for the question.\n"
            f"Question: {question}\nReference: {reference}\nPrediction: {prediction}\n"
            "Reply with 1 (correct) or 0 (incorrect) followed by a one-line rationale."
        )
        headers = {}
        if os.environ.get(self.api_key_env):
            headers["Authorization"] = f"Bearer {os.environ[self.api_key_env]}"
        body = {"model": self.model, "messages": [{"role": "user", "content": prompt}], "temperature": 0}
        last = None
        for attempt in range(self.retries + 1):
            try:
                r = httpx.post(self.endpoint, json=body, headers=headers, timeout=self.timeout)
                r.raise_for_status()
                text = r.json()["choices"][0]["message"]["content"].strip()
                if text[:1] in "01":
                    return int(text[0]), text[1:].strip()
                last = f"unparseable judge reply {text[:40]!r}"
            except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
                last = str(exc)
            if attempt < self.retries:
                time.sleep(self.backoff * (2**attempt))
        raise JudgeUnavailable(f"judge at {self.endpoint} unavailable: {last}")


def orm(trajectory: Trajectory, instance: QueryInstance, judges: Sequence[Judge] | None = None) -> JudgeVerdict:
    """Majority of three binary judgments on the final answer.

    Raises JudgeUnavailable when any judge fails after its retries; callers
    treat the trajectory as unscoreable.
    """
    judges = list(judges) if judges is not None else [exact_match_judge] * 3
    if len(judges) != 3:
        raise ValueError("exactly three judges are required")
    if trajectory.final_answer is None:
        return JudgeVerdict.from_votes([(0, "no final answer")] * 3)
    return JudgeVerdict.from_votes([j(instance.query_text, instance.answer, trajectory.final_answer) for j in judges])


# ---- composite ----------------------------------------------------------------


@dataclass(frozen=True)
class CoefficientVector:
    tool: float
    format: float
    prm: float
    orm: float

    def __post_init__(self):
        vals = self.as_tuple()
        if any(v < 0 for v in vals):
            raise ValueError(f"coefficients must be non-negative: {vals}")
        if abs(sum(vals) - 1.0) > 1e-9:
            raise ValueError(f"coefficients must sum to 1, got {sum(vals)!r}")
        if self.orm > ORM_CAP + 1e-12:
            raise ValueError(f"orm coefficient {self.orm} exceeds cap {ORM_CAP}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.tool, self.format, self.prm, self.orm)


INITIAL_COEFFICIENTS = CoefficientVector(0.6, 0.3, 0.1, 0.0)


def composite(r_tool: Sequence[float], r_format: Sequence[float], r_prm: float, r_orm: int, lam: CoefficientVector, T: int) -> float:
    """R = l_orm*R_orm + l_prm*R_prm + mean_t(l_tool*r_tool + l_format*r_format)."""
    if T < 1 or len(r_tool) != T or len(r_format) != T:
        raise ValueError("step reward lists must both have length T >= 1")
    step = sum(lam.tool * a + lam.format * b for a, b in zip(r_tool, r_format)) / T
    return lam.orm * r_orm + lam.prm * r_prm + step


@dataclass(frozen=True)
class RewardBreakdown:
    r_tool: tuple[float, ...]
    r_format: tuple[float, ...]
    r_prm: float
    r_orm: int
    total: float
    coefficients: CoefficientVector
    verdict: JudgeVerdict | None = None

    def recompute(self) -> float:
        return composite(self.r_tool, self.r_format, self.r_prm, self.r_orm, self.coefficients, len(self.r_tool))

    def to_dict(self) -> dict:
        return {
            "r_tool": list(self.r_tool), "r_format": list(self.r_format), "r_prm": self.r_prm,
            "r_orm": self.r_orm, "total": self.total, "coefficients": list(self.coefficients.as_tuple()),
            "votes": [list(v) for v in self.verdict.votes] if self.verdict else None,
        }


def score_trajectory(trajectory: Trajectory, instance: QueryInstance, lam: CoefficientVector, judges: Sequence[Judge] | None = None) -> RewardBreakdown:
    rt = tool_reward([s.tool_success for s in trajectory.steps])
    rf = format_reward([s.format_valid for s in trajectory.steps])
    rp = prm(trajectory, instance.entities)
    verdict = orm(trajectory, instance, judges)
    total = composite(rt, rf, rp, verdict.decision, lam, len(trajectory))
    return RewardBreakdown(tuple(rt), tuple(rf), rp, verdict.decision, total, lam, verdict)

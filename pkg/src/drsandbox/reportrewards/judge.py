"""Prompt assets and HTTP judge adapters for report scoring and attribution checks."""

from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass
from importlib import resources

from drsandbox.rewards import JudgeUnavailable
from drsandbox.reportrewards.rubric import DIMENSIONS, CriterionScores, RubricSet


def load_prompt(name: str) -> str:
    """Return a bundled prompt template ("scoring" or "verification")."""
    return resources.files("drsandbox.reportrewards").joinpath("assets", f"{name}_prompt.txt").read_text()


def split_roles(template: str) -> list[dict]:
    """Split a ``[system]`` / ``[user]`` template into chat messages."""
    parts = re.split(r"^\[(system|user)\]\s*$", template, flags=re.M)
    return [{"role": parts[i], "content": parts[i + 1].strip()} for i in range(1, len(parts), 2)]


def criteria_list(rubric: RubricSet) -> str:
    lines = []
    for d in DIMENSIONS:
        lines.append(f"## {d}")
        for c in rubric.criterions[d]:
            extra = f" ({c.explanation})" if c.explanation else ""
            lines.append(f"- {c.criterion}{extra} [weight {c.weight}]")
    return "\n".join(lines)


def render_scoring_prompt(task: str, article_1: str, article_2: str, rubric: RubricSet) -> list[dict]:
    text = load_prompt("scoring").format(
        task=task, article_1=article_1, article_2=article_2, criteria_list=criteria_list(rubric)
    )
    return split_roles(text)


def render_verification_prompt(sentence: str, context: str) -> list[dict]:
    return split_roles(load_prompt("verification").format(sentence=sentence, context=context))


def _json_object(text: str) -> dict:
    start, end = text.find("{"), text.rfind("}")
    if start < 0 or end <= start:
        raise ValueError("no JSON object in reply")
    return json.loads(text[start:end + 1])


@dataclass(frozen=True)
class ChatEndpoint:
    """Chat-completion style endpoint; the URL may come from an environment variable."""

    endpoint: str | None = None
    model: str = "judge"
    endpoint_env: str = "DRSANDBOX_JUDGE_URL"
    api_key_env: str = "DRSANDBOX_JUDGE_KEY"
    retries: int = 2
    timeout: float = 60.0
    backoff: float = 0.5

    def url(self) -> str:
        url = self.endpoint or os.environ.get(self.endpoint_env)
        if not url:
            raise JudgeUnavailable(f"no endpoint configured (set {self.endpoint_env})")
        return url

    def ask_json(self, messages: list[dict]) -> dict:
        import httpx

        url = self.url()
        headers = {}
        if os.environ.get(self.api_key_env):
            headers["Authorization"] = f"Bearer {os.environ[self.api_key_env]}"
        body = {"model": self.model, "messages": messages, "temperature": 0}
        last = None
        for attempt in range(self.retries + 1):
            try:
                r = httpx.post(url, json=body, headers=headers, timeout=self.timeout)
                r.raise_for_status()
                return _json_object(r.json()["choices"][0]["message"]["content"])
            except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
                last = str(exc)
            if attempt < self.retries:
                time.sleep(self.backoff * (2**attempt))
        raise JudgeUnavailable(f"judge at {url} unavailable: {last}")


@dataclass(frozen=True)
class RemoteRubricJudge:
    """Pairwise rubric scoring: the evaluated report is article 1, the reference article 2."""

    chat: ChatEndpoint = ChatEndpoint()

    def score(self, task: str, report: str, rubric: RubricSet, reference: str | None = None) -> CriterionScores:
        reply = self.chat.ask_json(render_scoring_prompt(task, report, reference or "", rubric))
        target, ref = {}, {}
        try:
            for d in DIMENSIONS:
                target[d], ref[d] = {}, {}
                for item in reply[d]:
                    target[d][item["criterion"]] = float(item["article_1_score"])
                    ref[d][item["criterion"]] = float(item["article_2_score"])
        except (KeyError, TypeError, ValueError) as exc:
            raise JudgeUnavailable(f"malformed scoring reply: {exc}") from exc
        return CriterionScores(target, ref if reference is not None else None)


@dataclass(frozen=True)
class RemoteAttributionJudge:
    chat: ChatEndpoint = ChatEndpoint()

    def __call__(self, sentence: str, context: str) -> tuple[bool, str]:
        reply = self.chat.ask_json(render_verification_prompt(sentence, context))
        result = str(reply.get("result", "")).strip().lower()
        if result not in ("yes", "no"):
            raise JudgeUnavailable(f"unexpected verification result {result!r}")
        return result == "yes", str(reply.get("detail", ""))

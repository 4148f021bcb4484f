"""Self-sampling: K rollouts per input from the policy being aligned, each
rendered into a short cited research note that the quality pipeline scores."""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Sequence

from drsandbox.kgforge.render import QueryInstance
from drsandbox.policyopt.policy import PolicyParams
from drsandbox.policyopt.train import derive_seed
from drsandbox.reportrewards import Criterion, RubricSet
from drsandbox.retrieval import Corpus
from drsandbox.searchenv import ChainPolicy, Limits, SearchEnv, Trajectory, rollout
from drsandbox.searchenv.agent import start_query
from drsandbox.text import jaccard

_SENT = re.compile(r"(?<=\.)\s+")


def policy_hash(policy) -> str:
    if isinstance(policy, PolicyParams):
        return policy.digest()
    return hashlib.sha256(repr(policy).encode()).hexdigest()[:16]


def _sentences(doc: str) -> list[str]:
    return [s.strip() for s in _SENT.split(doc) if s.strip()]


def _evidence_sentence(doc: str, anchor: str) -> str:
    """First document sentence mentioning ``anchor``, else the opening sentence."""
    sents = _sentences(doc)
    for s in sents:
        if anchor and anchor in s and not s.startswith(anchor + " is a"):
            return s
    return sents[0] if sents else doc


def draft_report(trajectory: Trajectory, instance: QueryInstance, corpus: Corpus) -> str:
    """Markdown note built only from what the trajectory observed.

    Each successful search contributes its top hit as a cited evidence
    sentence; the search log numbers steps by their position in the
    trajectory, so skipped (malformed) steps leave gaps in the numbering;
    the final-answer tag appears only when the agent answered.
    """
    refs: dict[str, int] = {}
    evidence, log = [], []
    prev = ""
    for i, s in enumerate(trajectory.steps, start=1):
        if not s.format_valid:
            continue
        log.append(f"{i}. {s.action.tool}: {s.action.argument or '(no argument)'} -> {s.observation.status}")
        if s.observation.status != "ok" or not s.observation.hits:
            continue
        top = s.observation.hits[0]
        if top not in corpus.documents:
            continue
        n = refs.setdefault(top, len(refs) + 1)
        evidence.append(f"{_evidence_sentence(corpus.documents[top], prev)} [{n}]")
        prev = corpus.titles.get(top, top)
    parts = [f"# Research note: {instance.id}", "", "## Question", "", instance.query_text, "", "## Evidence", ""]
    parts += evidence or ["No evidence was retrieved."]
    parts += ["", "## Search log", ""] + (log or ["No valid actions."])
    parts += ["", "## Answer", ""]
    if trajectory.final_answer is not None:
        parts.append(f"<final_answer>{trajectory.final_answer}</final_answer>")
    else:
        parts.append("The search ended without an answer.")
    if refs:
        parts += ["", "## References", ""] + [f"[{n}] {eid}" for eid, n in refs.items()]
    return "\n".join(parts) + "\n"


def passage_sources(report_targets: Sequence[str], descriptions: Sequence[str], corpus: Corpus) -> dict[str, str]:
    """Map each cited entity to the sentence of its document closest to the citing text."""
    out: dict[str, str] = {}
    for t, d in zip(report_targets, descriptions):
        if t in corpus.documents and t not in out:
            out[t] = max(_sentences(corpus.documents[t]), key=lambda s: jaccard(d, s))
    return out


def instance_rubric(instance: QueryInstance, corpus: Corpus) -> RubricSet:
    """Rubric derived from the instance: key entities, the answer, the conditions."""
    names = [corpus.titles.get(e, e) for e in instance.entities]
    return RubricSet(
        {"comprehensiveness": 0.3, "insight": 0.4, "instruction_following": 0.1, "readability": 0.2},
        {
            "comprehensiveness": tuple(Criterion(n, 1.0) for n in dict.fromkeys(names)),
            "insight": (Criterion(instance.answer, 1.0),),
            "instruction_following": (Criterion(start_query(instance), 1.0),),
            "readability": (Criterion("evidence answer references", 1.0),),
        },
        instance.query_text,
    )


def reference_report(instance: QueryInstance, env: SearchEnv, limits: Limits = Limits()) -> str:
    """Note written from the oracle chain rollout, used as the paired reference."""
    return draft_report(rollout(ChainPolicy(), instance, env, limits, 0), instance, env.corpus)


@dataclass(frozen=True)
class Sample:
    input_id: str
    k: int
    seed: int
    policy_hash: str
    trajectory: Trajectory
    report: str
    meta: dict = field(default_factory=dict)

    def signature(self) -> str:
        t = self.trajectory
        return json.dumps([list(t.action_ids), t.final_answer])

    def to_record(self) -> dict:
        return {
            "input_id": self.input_id, "k": self.k, "seed": self.seed, "policy_hash": self.policy_hash,
            "trajectory": self.trajectory.to_record(), "report": self.report, "meta": self.meta,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Sample":
        return cls(rec["input_id"], rec["k"], rec["seed"], rec["policy_hash"], Trajectory.from_record(rec["trajectory"]), rec["report"], rec.get("meta", {}))


@dataclass
class SampleSet:
    samples: list[Sample]
    zero_diversity: dict[str, bool]

    def by_input(self) -> dict[str, list[Sample]]:
        out: dict[str, list[Sample]] = {}
        for s in self.samples:
            out.setdefault(s.input_id, []).append(s)
        return out


def self_sample(policy, inputs: Sequence[QueryInstance], K: int, seed: int, env: SearchEnv, limits: Limits = Limits()) -> SampleSet:
    """K rollouts per input under seeds derived from (seed, input index, k)."""
    if K < 2:
        raise ValueError("K must be >= 2")
    h = policy_hash(policy)
    layer = env.new_layer()
    samples, flags = [], {}
    for i, q in enumerate(inputs):
        group = []
        for k in range(K):
            s = derive_seed(seed, i, k)
            t = rollout(policy, q, env, limits, s, layer)
            group.append(Sample(q.id, k, s, h, t, draft_report(t, q, env.corpus), {"master_seed": seed, "input_index": i}))
        flags[q.id] = len({g.signature() for g in group}) == 1
        samples.extend(group)
    return SampleSet(samples, flags)


def score_samples(samples: Sequence[Sample], instances: Sequence[QueryInstance], env: SearchEnv, weights=None, judges=None, now=None, limits: Limits = Limits()):
    """Quality-score every sample against its instance rubric and oracle reference note."""
    from drsandbox.alignment.quality import QualityWeights, Scored, quality_score
    from drsandbox.reportrewards import parse_report

    weights = weights or QualityWeights()
    by_id = {q.id: q for q in instances}
    refs: dict[str, str] = {}
    out = []
    for s in samples:
        q = by_id[s.input_id]
        if q.id not in refs:
            refs[q.id] = reference_report(q, env, limits)
        r = parse_report(s.report)
        src = passage_sources([c.target for c in r.citations], [c.description for c in r.citations], env.corpus)
        qs = quality_score(s.report, instance_rubric(q, env.corpus), refs[q.id], src, judges, weights, now)
        out.append(Scored(s, qs.combined))
    return out

"""Linear-softmax surrogate policy over templated actions."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from drsandbox import SandboxError
from drsandbox.searchenv.agent import FEATURE_NAMES, VOCABULARY, AgentState
from drsandbox.searchenv.trajectory import Trajectory

FORMAT_TAG = "drsandbox-policy"
FORMAT_VERSION = 1


class OutOfVocabulary(SandboxError):
    pass


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass(frozen=True)
class PolicyParams:
    """Weights ``W`` (features x actions); pi(a|x) = softmax(x @ W)[a].

    Probabilities are always recomputed from the logits, never cached.
    """

    weights: np.ndarray
    vocabulary: tuple[str, ...] = VOCABULARY
    feature_names: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "vocabulary", tuple(self.vocabulary))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if not self.vocabulary:
            raise ValueError("vocabulary must be non-empty")
        if w.shape != (len(self.feature_names), len(self.vocabulary)):
            raise ValueError(f"weights shape {w.shape} does not match features x vocabulary")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")

    @classmethod
    def zeros(cls, vocabulary=VOCABULARY, feature_names=FEATURE_NAMES) -> "PolicyParams":
        return cls(np.zeros((len(feature_names), len(vocabulary))), vocabulary, feature_names)

    @classmethod
    def random(cls, seed: int, scale: float = 0.1, vocabulary=VOCABULARY, feature_names=FEATURE_NAMES) -> "PolicyParams":
        rng = np.random.default_rng(seed)
        return cls(rng.normal(0.0, scale, (len(feature_names), len(vocabulary))), vocabulary, feature_names)

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape

    def with_weights(self, w: np.ndarray) -> "PolicyParams":
        return PolicyParams(w, self.vocabulary, self.feature_names)

    def log_probs(self, X: np.ndarray) -> np.ndarray:
        return log_softmax(np.atleast_2d(X) @ self.weights)

    def probs(self, x: np.ndarray) -> np.ndarray:
        return np.exp(log_softmax(np.asarray(x) @ self.weights))

    def distribution(self, state: AgentState) -> np.ndarray:
        return self.probs(state.features())

    def digest(self) -> str:
        import hashlib

        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "format": FORMAT_TAG,
            "version": FORMAT_VERSION,
            "vocabulary": list(self.vocabulary),
            "features": list(self.feature_names),
            "weights": [[float(v) for v in row] for row in self.weights],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyParams":
        if d.get("format") != FORMAT_TAG or d.get("version") != FORMAT_VERSION:
            raise ValueError(f"not a version-{FORMAT_VERSION} {FORMAT_TAG} document")
        return cls(np.array(d["weights"], dtype=float), tuple(d["vocabulary"]), tuple(d["features"]))


def save_policy(params: PolicyParams, path: str | Path) -> None:
    Path(path).write_text(json.dumps(params.to_dict(), indent=1) + "\n", encoding="utf-8")


def load_policy(path: str | Path) -> PolicyParams:
    return PolicyParams.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class ActionSeq:
    """One sampled action sequence: per-step features, chosen actions and the
    behaviour policy's log-probs (``old_log_probs``) when known."""

    features: np.ndarray
    actions: np.ndarray
    old_log_probs: np.ndarray | None = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.features, dtype=float))
        a = np.asarray(self.actions, dtype=int).reshape(-1)
        if X.shape[0] != a.shape[0] or a.size == 0:
            raise ValueError("features and actions must have the same non-zero length")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "actions", a)
        if self.old_log_probs is not None:
            lp = np.asarray(self.old_log_probs, dtype=float).reshape(-1)
            if lp.shape != a.shape:
                raise ValueError("old_log_probs must match actions")
            object.__setattr__(self, "old_log_probs", lp)

    def __len__(self) -> int:
        return int(self.actions.size)

    @classmethod
    def from_trajectory(cls, traj: Trajectory) -> "ActionSeq":
        if any(s.features is None or s.action_id is None for s in traj.steps):
            raise ValueError("trajectory lacks recorded features/action ids")
        lp = traj.action_log_probs
        return cls(
            np.array([s.features for s in traj.steps]),
            np.array([s.action_id for s in traj.steps]),
            np.array(lp) if lp is not None else None,
        )


def as_seq(item) -> ActionSeq:
    return item if isinstance(item, ActionSeq) else ActionSeq.from_trajectory(item)


def check_vocabulary(params: PolicyParams, seqs: Sequence[ActionSeq]) -> None:
    V = len(params.vocabulary)
    for s in seqs:
        if s.actions.min() < 0 or s.actions.max() >= V:
            raise OutOfVocabulary(f"action ids {sorted(set(s.actions.tolist()))} outside vocabulary of size {V}")
        if s.features.shape[1] != params.shape[0]:
            raise ValueError("feature dimension mismatch")


def sequence_log_prob(params: PolicyParams, seq: ActionSeq) -> float:
    lp = params.log_probs(seq.features)
    return float(lp[np.arange(len(seq)), seq.actions].sum())

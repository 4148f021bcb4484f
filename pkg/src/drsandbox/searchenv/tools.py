"""Unified tool layer: routing, rate limiting, retry on injected failure, caching."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from drsandbox.retrieval import Corpus, EmptyCorpus, UnknownEntity, crawl, search

TOOLS = ("internal_search", "web_search", "academic_search", "crawl", "answer", "reflect")
SEARCH_TOOLS = ("internal_search", "web_search", "academic_search")
RETRIEVAL_TOOLS = SEARCH_TOOLS + ("crawl",)
PARTITION_FOR = {"internal_search": "internal", "web_search": "web", "academic_search": "academic"}


@dataclass(frozen=True)
class ToolCall:
    tool: str
    argument: str
    step_index: int = 1

    def to_dict(self) -> dict:
        return {"tool": self.tool, "argument": self.argument, "step_index": self.step_index}


@dataclass(frozen=True)
class Observation:
    status: str  # "ok" | "error"
    payload: str
    from_cache: bool = False
    latency_ticks: int = 0
    hits: tuple[str, ...] = ()
    error_kind: str | None = None
    attempts: int = 0

    def __post_init__(self):
        if self.status not in ("ok", "error"):
            raise ValueError(self.status)
        if self.status == "error" and not self.payload.strip():
            raise ValueError("error observations need a diagnostic payload")

    @classmethod
    def error(cls, kind: str, message: str, attempts: int = 0) -> "Observation":
        return cls("error", f"[{kind}] {message}", error_kind=kind, attempts=attempts, latency_ticks=attempts)

    def to_dict(self) -> dict:
        return {
            "status": self.status, "payload": self.payload, "from_cache": self.from_cache,
            "latency_ticks": self.latency_ticks, "hits": list(self.hits),
            "error_kind": self.error_kind, "attempts": self.attempts,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Observation":
        return cls(d["status"], d["payload"], d.get("from_cache", False), d.get("latency_ticks", 0),
                   tuple(d.get("hits", ())), d.get("error_kind"), d.get("attempts", 0))


@dataclass(frozen=True)
class ToolLayerConfig:
    max_retries: int = 2
    cache_capacity: int = 256
    failure_injection_rate: float | Mapping[str, float] = 0.0
    rate_limit: int = 16
    top_k: int = 3

    def __post_init__(self):
        for name in ("max_retries", "cache_capacity", "rate_limit", "top_k"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        rates = self.failure_injection_rate
        values = rates.values() if isinstance(rates, Mapping) else [rates]
        if any(not 0.0 <= r <= 1.0 for r in values):
            raise ValueError("failure_injection_rate must lie in [0, 1]")

    def failure_rate(self, tool: str) -> float:
        r = self.failure_injection_rate
        return float(r.get(tool, 0.0)) if isinstance(r, Mapping) else float(r)


def format_hits(hits) -> str:
    return "\n".join(f"[{i}] {h.title} ({h.entity_id}): {h.snippet}" for i, h in enumerate(hits, 1))


@dataclass
class ToolLayer:
    """Per-worker tool gateway. The cache is private to this layer; rate-limit
    counters reset at every :meth:`begin_trajectory`."""

    corpus: Corpus
    cfg: ToolLayerConfig = field(default_factory=ToolLayerConfig)
    cache: OrderedDict = field(default_factory=OrderedDict)
    calls: dict = field(default_factory=dict)

    def begin_trajectory(self) -> None:
        self.calls = {}

    def _run(self, call: ToolCall) -> Observation:
        if call.tool in SEARCH_TOOLS:
            hits = search(self.corpus, call.argument, self.cfg.top_k, partition=PARTITION_FOR[call.tool])
            return Observation("ok", format_hits(hits), hits=tuple(h.entity_id for h in hits))
        text = crawl(self.corpus, call.argument.strip())
        return Observation("ok", text, hits=(call.argument.strip(),))

    def _store(self, key, obs: Observation) -> None:
        if self.cfg.cache_capacity == 0:
            return
        self.cache[key] = obs
        self.cache.move_to_end(key)
        while len(self.cache) > self.cfg.cache_capacity:
            self.cache.popitem(last=False)


def execute(call: ToolCall, layer: ToolLayer, rng: np.random.Generator) -> Observation:
    """Route one retrieval call through the layer.

    Errors come back as ``status="error"`` observations whose ``error_kind``
    is ``unknown-tool``, ``rate-limited``, ``exhausted-retries``,
    ``unknown-entity`` or ``empty-corpus``.
    """
    cfg = layer.cfg
    if call.tool not in RETRIEVAL_TOOLS:
        return Observation.error("unknown-tool", f"'{call.tool}' is not a retrieval tool; use one of {', '.join(RETRIEVAL_TOOLS)}")
    used = layer.calls.get(call.tool, 0)
    layer.calls[call.tool] = used + 1
    if used >= cfg.rate_limit:
        return Observation.error("rate-limited", f"{call.tool} limit of {cfg.rate_limit} calls per trajectory reached")
    key = (call.tool, call.argument)
    cached = layer.cache.get(key)
    if cached is not None:
        layer.cache.move_to_end(key)
        return Observation(cached.status, cached.payload, True, 0, cached.hits)
    p_fail = cfg.failure_rate(call.tool)
    attempts = 0
    for _ in range(cfg.max_retries + 1):
        attempts += 1
        if p_fail > 0 and rng.random() < p_fail:
            continue
        try:
            obs = layer._run(call)
        except UnknownEntity as exc:
            return Observation.error("unknown-entity", str(exc), attempts)
        except EmptyCorpus as exc:
            return Observation.error("empty-corpus", str(exc), attempts)
        obs = Observation(obs.status, obs.payload, False, attempts, obs.hits, attempts=attempts)
        layer._store(key, obs)
        return obs
    return Observation.error("exhausted-retries", f"{call.tool} failed {attempts} times; try again later or rephrase", attempts)


def merge_caches(layers) -> OrderedDict:
    """Union of worker caches in worker order (first writer wins)."""
    merged: OrderedDict = OrderedDict()
    for layer in layers:
        for k, v in layer.cache.items():
            merged.setdefault(k, v)
    return merged

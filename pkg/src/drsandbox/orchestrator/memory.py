"""Append-only reasoning (XoT) and tool memory shared by all agents of a run."""

from __future__ import annotations

import hashlib
import threading
from dataclasses import asdict, dataclass

DIGEST_CHARS = 1000


@dataclass(frozen=True)
class XoTEntry:
    agent_id: str
    subtask_id: str
    step: int
    thought: str
    links: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {**asdict(self), "links": list(self.links)}

    @classmethod
    def from_dict(cls, d: dict) -> "XoTEntry":
        return cls(d["agent_id"], d["subtask_id"], d["step"], d["thought"], tuple(d.get("links", ())))


@dataclass(frozen=True)
class ToolRecord:
    """One executed tool call; the payload is kept as a bounded digest plus its hash."""

    subtask_id: str
    step: int
    tool: str
    argument: str
    status: str
    digest: str
    sha256: str
    sources: tuple[str, ...] = ()  # entity ids the observation surfaced

    @property
    def ref(self) -> str:
        return f"{self.subtask_id}:{self.step}"

    def to_dict(self) -> dict:
        return {**asdict(self), "sources": list(self.sources)}

    @classmethod
    def from_dict(cls, d: dict) -> "ToolRecord":
        return cls(d["subtask_id"], d["step"], d["tool"], d["argument"], d["status"], d["digest"], d["sha256"], tuple(d.get("sources", ())))


def _order(subtask_id: str) -> tuple[int, str]:
    # "S2" sorts before "S10"
    return len(subtask_id), subtask_id


def digest_payload(payload: str) -> tuple[str, str]:
    return payload[:DIGEST_CHARS], hashlib.sha256(payload.encode()).hexdigest()


class Memory:
    """Thread-safe append-only store.

    Appends may arrive in any order from concurrent agents; reads return
    entries in the total order (subtask id, step, agent id).
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._xot: list[XoTEntry] = []
        self._tools: dict[str, ToolRecord] = {}

    def add_thought(self, entry: XoTEntry) -> None:
        with self._lock:
            self._xot.append(entry)

    def add_tool(self, record: ToolRecord) -> None:
        with self._lock:
            if record.ref in self._tools:
                raise ValueError(f"tool record {record.ref} already exists")
            self._tools[record.ref] = record

    def xot(self) -> tuple[XoTEntry, ...]:
        with self._lock:
            return tuple(sorted(self._xot, key=lambda e: (_order(e.subtask_id), e.step, e.agent_id)))

    def tools(self) -> tuple[ToolRecord, ...]:
        with self._lock:
            return tuple(sorted(self._tools.values(), key=lambda r: (_order(r.subtask_id), r.step)))

    def size(self) -> tuple[int, int]:
        with self._lock:
            return len(self._xot), len(self._tools)

    def resolve(self, target: str) -> ToolRecord | None:
        """Resolve "<subtask>:<step>/<entity>" to its record if the entity was surfaced there."""
        ref, _, entity = target.partition("/")
        rec = self._tools.get(ref)
        if rec is None or rec.status != "ok" or (entity and entity not in rec.sources):
            return None
        return rec

    @classmethod
    def restore(cls, xot, tools) -> "Memory":
        m = cls()
        for e in xot:
            m.add_thought(e)
        for r in tools:
            m.add_tool(r)
        return m

    def __eq__(self, other) -> bool:
        return isinstance(other, Memory) and self.xot() == other.xot() and self.tools() == other.tools()

"""JSON Lines persistence for samples, scored partitions and preference pairs."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence

from drsandbox.alignment.quality import PreferencePair, Scored
from drsandbox.alignment.samples import Sample


def _write(path, records: Iterable[dict]) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def _read(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def write_samples(samples: Sequence[Sample], path) -> None:
    _write(path, (s.to_record() for s in samples))


def read_samples(path) -> list[Sample]:
    return [Sample.from_record(r) for r in _read(path)]


def write_scored(scored: Sequence[Scored], path, label: str = "") -> None:
    _write(path, ({**s.sample.to_record(), "score": s.score, "set": label} for s in scored))


def read_scored(path) -> list[Scored]:
    return [Scored(Sample.from_record(r), r["score"]) for r in _read(path)]


def write_pairs(pairs: Sequence[PreferencePair], path) -> None:
    _write(path, (
        {"input_id": p.input_id, "policy_hash": p.policy_hash, "gap": p.gap,
         "chosen": p.chosen.to_record(), "rejected": p.rejected.to_record()}
        for p in pairs
    ))


def read_pairs(path) -> list[PreferencePair]:
    return [
        PreferencePair(r["input_id"], Sample.from_record(r["chosen"]), Sample.from_record(r["rejected"]), r["gap"], r["policy_hash"])
        for r in _read(path)
    ]

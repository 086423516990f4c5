"""Append-only audit log of one trial replication."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any


@dataclass
class EventLog:
    events: list[tuple[int, str, dict[str, Any]]] = field(default_factory=list)

    def emit(self, kind: str, **payload: Any) -> int:
        seq = len(self.events)
        self.events.append((seq, kind, payload))
        return seq

    def of_kind(self, kind: str) -> list[tuple[int, dict[str, Any]]]:
        return [(seq, p) for seq, k, p in self.events if k == kind]

    def to_jsonl(self) -> str:
        lines = [json.dumps({"seq": seq, "event": kind, **payload}, default=str, sort_keys=True)
                 for seq, kind, payload in self.events]
        return "\n".join(lines) + ("\n" if lines else "")


def concealment_violations(log: EventLog) -> list[int]:
    """Patient ids with an outcome recorded before their assignment token."""
    assigned: dict[int, int] = {}
    for seq, p in log.of_kind("assign"):
        assigned.setdefault(p["patient"], seq)
    bad = []
    for seq, p in log.of_kind("outcome"):
        first = assigned.get(p["patient"])
        if first is None or first > seq:
            bad.append(p["patient"])
    return sorted(set(bad))

"""Append-only audit trail.

One entry per line: logical time, entry kind, then the payload with keys
sorted, so two runs can be compared byte for byte.  Kinds: subscribe,
detection, activation, achievement, directive, skip, veto, decision.
"""

from __future__ import annotations

import json

KINDS = ("subscribe", "detection", "activation", "achievement",
         "directive", "skip", "veto", "decision")


class AuditLog:
    def __init__(self):
        self.entries: list[dict] = []

    def append(self, kind: str, t: int, **payload) -> dict:
        if kind not in KINDS:
            raise ValueError(f"unknown audit kind {kind!r}")
        entry = {"t": t, "kind": kind, **payload}
        self.entries.append(entry)
        return entry

    def query(self, kind: str | None = None, t_min: int | None = None,
              t_max: int | None = None, entity: str | None = None) -> list[dict]:
        out = []
        for entry in self.entries:
            if kind is not None and entry["kind"] != kind:
                continue
            if t_min is not None and entry["t"] < t_min:
                continue
            if t_max is not None and entry["t"] > t_max:
                continue
            if entity is not None and entity not in entry.values():
                continue
            out.append(entry)
        return out

    def encode_entry(self, entry: dict) -> str:
        obj = {"t": entry["t"], "kind": entry["kind"]}
        for key in sorted(entry):
            if key not in ("t", "kind"):
                obj[key] = entry[key]
        return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)

    def lines(self) -> list[str]:
        return [self.encode_entry(e) for e in self.entries]

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.lines():
                fh.write(line + "\n")

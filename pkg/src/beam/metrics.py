"""Run metrics recomputed purely from the log files.

Detection latency is measured in ticks between a detection's latest
constituent and the tick in which the detection was published; the
publication tick is recovered from the position of the detection line
relative to the ClockTick events in the same log, so no extra timestamps
are needed.
"""

from __future__ import annotations

import json

from .events import decode

TICK_MS = 60_000


class CorruptLog(ValueError):
    pass


def compute(event_lines: list[str], audit_lines: list[str]) -> dict:
    try:
        events = [decode(line) for line in event_lines if line.strip()]
        audits = [json.loads(line) for line in audit_lines if line.strip()]
    except ValueError as exc:
        raise CorruptLog(str(exc)) from None

    by_id = {e.id: e for e in events}
    detections: dict[str, int] = {}
    latencies: list[int] = []
    current_tick = 0
    for event in events:
        if event.etype == "ClockTick":
            current_tick = int(event.attrs.get("tick", event.t_start // TICK_MS))
        if event.topic.startswith("cep."):
            detections[event.etype] = detections.get(event.etype, 0) + 1
            parent_ticks = []
            for pid in event.parents:
                parent = by_id.get(pid)
                if parent is None:
                    raise CorruptLog(f"detection {event.id} references missing parent {pid}")
                parent_ticks.append(parent.t_end // TICK_MS)
            if parent_ticks:
                latencies.append(current_tick - max(parent_ticks))

    directives: dict[str, dict[str, int]] = {}
    vetoes = 0
    skips = 0
    decisions = {"accepted": 0, "rejected": 0, "expired": 0}
    recommended = 0
    for entry in audits:
        kind = entry.get("kind")
        if kind == "directive":
            dkind = str(entry.get("directive_kind", ""))
            outcome = str(entry.get("outcome", ""))
            by_kind = directives.setdefault(dkind, {})
            by_kind[outcome] = by_kind.get(outcome, 0) + 1
            if outcome == "recommended":
                recommended += 1
        elif kind == "veto":
            vetoes += 1
        elif kind == "skip":
            skips += 1
        elif kind == "decision" and entry.get("outcome") in decisions:
            decisions[entry["outcome"]] += 1

    pending = recommended - decisions["accepted"] - decisions["rejected"] - decisions["expired"]
    return {
        "events": len(events),
        "detections": dict(sorted(detections.items())),
        "directives": {k: dict(sorted(v.items())) for k, v in sorted(directives.items())},
        "vetoes": vetoes,
        "skips": skips,
        "recommendations": {**decisions, "pending": pending},
        "latency_ticks": {
            "mean": (sum(latencies) / len(latencies)) if latencies else 0.0,
            "max": max(latencies) if latencies else 0,
        },
    }

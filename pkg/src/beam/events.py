"""Canonical event model and wire codec.

Every record flowing through the system is an Event: simple ones come from
adapters (the simulator), complex ones are emitted by the CEP engine and
carry their constituents in ``parents``.  The wire format is one JSON object
per line with a fixed field order, so the canonical encoder is a pure
function of the event value and log files can be compared byte for byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

Scalar = str | int | float | bool

WIRE_FIELDS = ("id", "etype", "topic", "t_start", "t_end", "source", "parents", "attrs")


class InvalidEvent(ValueError):
    """The event violates a model invariant; nothing was published."""


class DecodeError(ValueError):
    """A wire line could not be decoded.

    ``kind`` is one of MissingField / BadType / BadStructure and ``field``
    names the offending field when one can be identified.
    """

    def __init__(self, kind: str, field_name: str | None = None, detail: str = ""):
        self.kind = kind
        self.field = field_name
        msg = kind if field_name is None else f"{kind}({field_name})"
        super().__init__(msg + (f": {detail}" if detail else ""))


@dataclass(frozen=True)
class Event:
    id: str
    etype: str
    topic: str
    t_start: int
    t_end: int
    source: str
    attrs: dict[str, Scalar] = field(default_factory=dict)
    parents: tuple[str, ...] = ()

    @property
    def simple(self) -> bool:
        return not self.parents


def _valid_scalar(value) -> bool:
    if isinstance(value, bool):
        return True
    if isinstance(value, int):
        return True
    if isinstance(value, float):
        return math.isfinite(value)
    return isinstance(value, str)


def validate_event(event: Event) -> None:
    """Raise InvalidEvent if any model invariant is violated."""
    if not event.id or not isinstance(event.id, str):
        raise InvalidEvent("event id must be a non-empty string")
    if not event.etype:
        raise InvalidEvent("event etype must be non-empty")
    if not event.topic or any(not seg for seg in event.topic.split(".")):
        raise InvalidEvent(f"malformed topic {event.topic!r}")
    if "*" in event.topic:
        raise InvalidEvent("topics may not contain wildcards")
    if not isinstance(event.t_start, int) or not isinstance(event.t_end, int) or isinstance(event.t_start, bool) or isinstance(event.t_end, bool):
        raise InvalidEvent("t_start/t_end must be integers (logical ms)")
    if event.t_start > event.t_end:
        raise InvalidEvent(f"t_start {event.t_start} > t_end {event.t_end}")
    if event.simple and event.t_start != event.t_end:
        raise InvalidEvent("simple events must have t_start == t_end")
    for key, value in event.attrs.items():
        if not key or not isinstance(key, str):
            raise InvalidEvent(f"bad attr key {key!r}")
        if not _valid_scalar(value):
            raise InvalidEvent(f"attr {key!r} is not a finite scalar: {value!r}")


def encode(event: Event) -> str:
    """Canonical one-line encoding: fixed field order, attrs keys sorted."""
    obj = {
        "id": event.id,
        "etype": event.etype,
        "topic": event.topic,
        "t_start": event.t_start,
        "t_end": event.t_end,
        "source": event.source,
        "parents": list(event.parents),
        "attrs": {k: event.attrs[k] for k in sorted(event.attrs)},
    }
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def decode(line: str) -> Event:
    """Decode one wire line; accepts any field order but rejects drift."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DecodeError("BadStructure", None, str(exc)) from None
    if not isinstance(obj, dict):
        raise DecodeError("BadStructure", None, "line is not an object")
    for name in WIRE_FIELDS:
        if name not in obj:
            raise DecodeError("MissingField", name)
    for name in obj:
        if name not in WIRE_FIELDS:
            raise DecodeError("BadStructure", name, "unknown field")
    for name in ("id", "etype", "topic", "source"):
        if not isinstance(obj[name], str):
            raise DecodeError("BadType", name, "expected string")
    for name in ("t_start", "t_end"):
        if isinstance(obj[name], bool) or not isinstance(obj[name], int):
            raise DecodeError("BadType", name, "expected integer")
    if not isinstance(obj["parents"], list) or not all(isinstance(p, str) for p in obj["parents"]):
        raise DecodeError("BadType", "parents", "expected list of ids")
    if not isinstance(obj["attrs"], dict):
        raise DecodeError("BadType", "attrs", "expected object")
    for key, value in obj["attrs"].items():
        if not _valid_scalar(value):
            raise DecodeError("BadType", f"attrs.{key}", "expected scalar")
    event = Event(
        id=obj["id"],
        etype=obj["etype"],
        topic=obj["topic"],
        t_start=obj["t_start"],
        t_end=obj["t_end"],
        source=obj["source"],
        attrs=dict(obj["attrs"]),
        parents=tuple(obj["parents"]),
    )
    try:
        validate_event(event)
    except InvalidEvent as exc:
        raise DecodeError("BadStructure", None, str(exc)) from None
    return event


def read_log(path) -> list[Event]:
    """Read a newline-delimited event log file."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(decode(line))
    return out

"""Topic-based publish/subscribe broker.

Topics are dot-separated; a subscription filter may end in a single ``*``
segment which matches one or more trailing segments ("trucks.*" matches
"trucks.gps" but not "trucks").  The broker serializes all publishes into
one total order: events published from inside a delivery callback are
queued and processed after the current event finishes delivering, so the
cascade order is deterministic and per-subscriber delivery order equals
publish order.

The delivery set for an event is snapshotted when ``publish`` is called,
which makes the returned count exact and pins down when concurrent
subscription changes take effect (the next publish).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable

from .events import Event, InvalidEvent, validate_event


class InvalidFilter(ValueError):
    """Topic filter rejected: empty, bad segment, or misplaced wildcard."""


@dataclass(frozen=True)
class Subscription:
    sub_id: str
    subscriber: str
    topic_filter: str
    etype_filter: str | None = None
    active: bool = True


def validate_filter(topic_filter: str) -> None:
    if not topic_filter:
        raise InvalidFilter("empty topic filter")
    segments = topic_filter.split(".")
    if any(not seg for seg in segments):
        raise InvalidFilter(f"empty segment in {topic_filter!r}")
    for i, seg in enumerate(segments):
        if "*" in seg and (seg != "*" or i != len(segments) - 1):
            raise InvalidFilter(f"wildcard only allowed as the final segment: {topic_filter!r}")


def topic_matches(topic_filter: str, topic: str) -> bool:
    fparts = topic_filter.split(".")
    tparts = topic.split(".")
    if fparts[-1] == "*":
        prefix = fparts[:-1]
        return len(tparts) > len(prefix) and tparts[: len(prefix)] == prefix
    return fparts == tparts


def subscription_matches(sub: Subscription, event: Event) -> bool:
    if not topic_matches(sub.topic_filter, event.topic):
        return False
    return sub.etype_filter is None or sub.etype_filter == event.etype


def replay(log: list[Event], sub: Subscription) -> list[Event]:
    """Events the subscription would have received from this log, in order."""
    return [e for e in log if subscription_matches(sub, e)]


Handler = Callable[[Event], None]


class Broker:
    def __init__(self):
        self._subs: dict[str, Subscription] = {}
        self._handlers: dict[str, Handler] = {}
        self._sub_order: list[str] = []
        self._next_sub = 0
        self._seen_ids: set[str] = set()
        self.log: list[Event] = []          # full publish order, append-only
        self.topic_logs: dict[str, list[Event]] = {}
        self._queue: deque[tuple[Event, list[str]]] = deque()
        self._draining = False

    def subscribe(self, subscriber: str, topic_filter: str, etype_filter: str | None = None,
                  handler: Handler | None = None) -> str:
        validate_filter(topic_filter)
        self._next_sub += 1
        sub_id = f"s{self._next_sub}"
        self._subs[sub_id] = Subscription(sub_id, subscriber, topic_filter, etype_filter)
        if handler is not None:
            self._handlers[sub_id] = handler
        self._sub_order.append(sub_id)
        return sub_id

    def unsubscribe(self, sub_id: str) -> bool:
        sub = self._subs.get(sub_id)
        if sub is None or not sub.active:
            return False
        self._subs[sub_id] = Subscription(sub.sub_id, sub.subscriber, sub.topic_filter,
                                          sub.etype_filter, active=False)
        return True

    def subscriptions(self) -> list[Subscription]:
        return [self._subs[s] for s in self._sub_order if self._subs[s].active]

    def publish(self, event: Event) -> int:
        validate_event(event)
        if event.id in self._seen_ids:
            raise InvalidEvent(f"duplicate event id {event.id}")
        matched = [s for s in self._sub_order
                   if self._subs[s].active and subscription_matches(self._subs[s], event)]
        self._seen_ids.add(event.id)
        self._queue.append((event, matched))
        if not self._draining:
            self._draining = True
            try:
                while self._queue:
                    queued, targets = self._queue.popleft()
                    self.log.append(queued)
                    self.topic_logs.setdefault(queued.topic, []).append(queued)
                    for sub_id in targets:
                        handler = self._handlers.get(sub_id)
                        if handler is not None:
                            handler(queued)
            finally:
                self._draining = False
        return len(matched)

import random

import pytest

from beam.bus import Broker, InvalidFilter, Subscription, replay, validate_filter
from beam.events import Event, InvalidEvent


def ev(i, topic="trucks.gps", etype="GpsPositionEvent", t=1000):
    return Event(id=f"e{i}", etype=etype, topic=topic, t_start=t, t_end=t, source="gen")


def test_publish_no_subscribers():
    assert Broker().publish(ev(1)) == 0


def test_publish_counts_matching_subscriptions():
    broker = Broker()
    for _ in range(3):
        broker.subscribe("engine", "trucks.*")
    broker.subscribe("crm-watcher", "crm.*")
    assert broker.publish(ev(1, "trucks.gps")) == 3


def test_wildcard_semantics():
    broker = Broker()
    broker.subscribe("s", "trucks.*")
    assert broker.publish(ev(1, "trucks.gps")) == 1
    assert broker.publish(ev(2, "trucks.gps.raw")) == 1
    assert broker.publish(ev(3, "trucks")) == 0
    assert broker.publish(ev(4, "crm.order")) == 0


def test_etype_filter_excludes():
    broker = Broker()
    broker.subscribe("engine", "crm.returnee", etype_filter="OrderEvent")
    assert broker.publish(ev(1, "crm.returnee", etype="ReturneeRequest")) == 0


def test_duplicate_subscriptions_deliver_twice():
    broker = Broker()
    got = []
    a = broker.subscribe("engine", "crm.*", handler=lambda e: got.append(("a", e.id)))
    b = broker.subscribe("engine", "crm.*", handler=lambda e: got.append(("b", e.id)))
    assert a != b
    assert broker.publish(ev(1, "crm.returnee")) == 2
    assert got == [("a", "e1"), ("b", "e1")]


def test_unsubscribe():
    broker = Broker()
    sub = broker.subscribe("engine", "crm.*")
    assert broker.unsubscribe(sub) is True
    assert broker.unsubscribe(sub) is False
    assert broker.unsubscribe("nope") is False
    assert broker.publish(ev(1, "crm.returnee")) == 0
    broker.subscribe("engine", "crm.*")
    assert broker.publish(ev(2, "crm.returnee")) == 1


def test_invalid_filters():
    for bad in ("", "a..b", "a.*.b", "*.a", "a.b*", "a.**"):
        with pytest.raises(InvalidFilter):
            validate_filter(bad)
    validate_filter("*")
    validate_filter("a.b.*")


def test_duplicate_event_id_rejected():
    broker = Broker()
    broker.publish(ev(1))
    with pytest.raises(InvalidEvent):
        broker.publish(ev(1))


def test_fifo_per_subscriber_and_cascade_order():
    broker = Broker()
    seen = []

    def reactor(event):
        if event.topic == "a.in" and int(event.id[1:]) < 3:
            broker.publish(Event(id=f"r{event.id}", etype="R", topic="b.out",
                                 t_start=event.t_start, t_end=event.t_end, source="gen"))

    broker.subscribe("reactor", "a.*", handler=reactor)
    broker.subscribe("watcher", "*", handler=lambda e: seen.append(e.id))
    broker.publish(ev(1, "a.in"))
    broker.publish(ev(2, "a.in"))
    # each publish fully drains its cascade before returning
    assert seen == ["e1", "re1", "e2", "re2"]
    assert [e.id for e in broker.log] == seen


def test_delivery_against_linear_scan_oracle():
    rng = random.Random(7)
    topics = ["crm.returnee", "crm.order", "trucks.gps", "trucks.fuel", "wms.delivery", "sim.clock"]
    etypes = ["A", "B", "C"]
    broker = Broker()
    delivered: dict[str, list[str]] = {}
    subs = []
    for i in range(25):
        segs = rng.choice(topics).split(".")
        cut = rng.randint(1, len(segs))
        pattern = ".".join(segs[:cut] + (["*"] if cut < len(segs) or rng.random() < 0.4 else []))
        if pattern.endswith("."):
            pattern = pattern[:-1]
        etf = rng.choice([None, *etypes])
        name = f"sub{i}"
        delivered[name] = []
        sub_id = broker.subscribe(name, pattern, etype_filter=etf,
                                  handler=(lambda n: lambda e: delivered[n].append(e.id))(name))
        subs.append((name, pattern, etf, sub_id))

    events = [ev(i, rng.choice(topics), rng.choice(etypes), t=1000 + i) for i in range(200)]
    counts = [broker.publish(e) for e in events]

    # independent oracle: plain prefix logic over every (event, subscription) pair
    def oracle_match(pattern, etf, event):
        p, t = pattern.split("."), event.topic.split(".")
        if p[-1] == "*":
            ok = len(t) >= len(p) and t[:len(p) - 1] == p[:-1]
        else:
            ok = p == t
        return ok and (etf is None or etf == event.etype)

    for i, event in enumerate(events):
        expect = [n for n, pattern, etf, _ in subs if oracle_match(pattern, etf, event)]
        assert counts[i] == len(expect)
        for name, pattern, etf, _ in subs:
            times = delivered[name].count(event.id)
            assert times == (1 if name in expect else 0)   # at-most-once

    # per-subscriber order equals publish order
    order = {e.id: i for i, e in enumerate(broker.log)}
    for name in delivered:
        ids = delivered[name]
        assert ids == sorted(ids, key=order.__getitem__)

    # replay over the topic log reproduces each live delivery trace
    for name, pattern, etf, sub_id in subs:
        sub = Subscription(sub_id, name, pattern, etf)
        assert [e.id for e in replay(broker.log, sub)] == delivered[name]


def test_replay_trivial():
    sub = Subscription("s1", "x", "crm.*")
    assert replay([], sub) == []
    log = [ev(1, "crm.a"), ev(2, "trucks.gps"), ev(3, "crm.b"),
           ev(4, "sim.clock"), ev(5, "wms.delivery")]
    assert [e.id for e in replay(log, sub)] == ["e1", "e3"]

import json

import pytest
from hypothesis import given, strategies as st

from beam.events import DecodeError, Event, InvalidEvent, decode, encode, validate_event

scalars = (st.text(max_size=12) | st.integers(-10**9, 10**9) | st.booleans()
           | st.floats(allow_nan=False, allow_infinity=False, width=32))
attr_maps = st.dictionaries(st.text(min_size=1, max_size=8).filter(str.isidentifier), scalars, max_size=6)


@st.composite
def events(draw):
    t = draw(st.integers(0, 10**9))
    return Event(
        id=draw(st.text(min_size=1, max_size=10).filter(str.isidentifier)),
        etype=draw(st.sampled_from(["A", "ReturneeRequest", "FuelLevelEvent"])),
        topic=draw(st.sampled_from(["crm.returnee", "trucks.gps", "a.b.c"])),
        t_start=t, t_end=t,
        source=draw(st.sampled_from(["sim", "cep", "gen"])),
        attrs=draw(attr_maps),
    )


@given(events())
def test_roundtrip_identity(event):
    assert decode(encode(event)) == event


def test_canonical_attr_order():
    a = Event("e1", "A", "t.x", 5, 5, "s", attrs={"b": 1, "a": 2})
    b = Event("e1", "A", "t.x", 5, 5, "s", attrs={"a": 2, "b": 1})
    assert encode(a) == encode(b)
    first = json.loads(encode(a))
    assert list(first) == ["id", "etype", "topic", "t_start", "t_end", "source", "parents", "attrs"]


def test_decode_accepts_any_field_order():
    line = encode(Event("e1", "A", "t.x", 5, 5, "s", attrs={"k": True}))
    shuffled = json.dumps(dict(reversed(list(json.loads(line).items()))))
    assert decode(shuffled) == decode(line)


def test_decode_missing_field():
    obj = json.loads(encode(Event("e1", "A", "t.x", 5, 5, "s")))
    del obj["etype"]
    with pytest.raises(DecodeError) as err:
        decode(json.dumps(obj))
    assert err.value.kind == "MissingField" and err.value.field == "etype"


def test_decode_bad_type_and_structure():
    obj = json.loads(encode(Event("e1", "A", "t.x", 5, 5, "s")))
    obj["t_start"] = "soon"
    with pytest.raises(DecodeError) as err:
        decode(json.dumps(obj))
    assert err.value.kind == "BadType" and err.value.field == "t_start"
    with pytest.raises(DecodeError) as err:
        decode("[1, 2]")
    assert err.value.kind == "BadStructure"
    obj = json.loads(encode(Event("e1", "A", "t.x", 5, 5, "s")))
    obj["extra"] = 1
    with pytest.raises(DecodeError) as err:
        decode(json.dumps(obj))
    assert err.value.kind == "BadStructure" and err.value.field == "extra"


def test_invariants():
    with pytest.raises(InvalidEvent):
        validate_event(Event("e1", "A", "t.x", 5, 4, "s"))
    with pytest.raises(InvalidEvent):  # simple events are instantaneous
        validate_event(Event("e1", "A", "t.x", 4, 5, "s"))
    with pytest.raises(InvalidEvent):  # nested attrs are not scalars
        validate_event(Event("e1", "A", "t.x", 5, 5, "s", attrs={"k": [1]}))
    with pytest.raises(InvalidEvent):
        validate_event(Event("e1", "A", "t..x", 5, 5, "s"))
    validate_event(Event("e1", "A", "t.x", 4, 5, "s", parents=("p1",)))

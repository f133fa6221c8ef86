"""Incremental complex-event detection over the live stream.

The engine keeps a store of partial matches per active pattern and
advances them event by event.  SEQ nodes use a frontier (operand i must
complete before operand i+1 may bind), which is sound and complete for
strict interval precedence because the bus delivers events in
non-decreasing time order.  AND and OR nodes branch the partial when an
event has more than one admissible placement.

Absence (NOT) constraints are checked at match completion against a
per-pattern memory of the relevant event types, and guards are evaluated
once, over the final bindings.  Under first-per-partition policy a
detection consumes every partial of its partition; candidate selection
and consumption follow the same deterministic rules the brute-force
oracle applies, so the two stay in lockstep.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass

from . import expr as exprlang
from .events import Event
from .patterns import AndOp, Leaf, OrOp, Pattern, Seq


class OutOfOrderEvent(ValueError):
    """Arrival order went backwards; with reorder slack 0 this is a harness bug."""


# --- partial-match state tree ----------------------------------------------

@dataclass(frozen=True)
class _LeafSt:
    leaf: Leaf
    seq: int = -1
    event: Event | None = None

    @property
    def empty(self):
        return self.event is None

    @property
    def complete(self):
        return self.event is not None

    @property
    def start(self):
        return self.event.t_start

    @property
    def end(self):
        return self.event.t_end

    def advance(self, seq, event, floor):
        if self.event is not None or event.etype != self.leaf.etype:
            return []
        if floor is not None and event.t_start <= floor:
            return []
        return [_LeafSt(self.leaf, seq, event)]

    def binds(self):
        if self.event is not None:
            yield (self.leaf.slot, self.seq, self.event, self.leaf.var)

    def scopes(self):
        return
        yield


@dataclass(frozen=True)
class _SeqSt:
    node: Seq
    done: tuple
    cur: object | None   # None once all operands are complete

    @property
    def empty(self):
        return not self.done and self.cur.empty

    @property
    def complete(self):
        return self.cur is None

    @property
    def start(self):
        return self.done[0].start if self.done else self.cur.start

    @property
    def end(self):
        return self.done[-1].end if self.complete else max(
            [st.end for st in self.done] + ([] if self.cur.empty else [self.cur.end]))

    def advance(self, seq, event, floor):
        if self.complete:
            return []
        if self.cur.empty:
            eff = self.done[-1].end if self.done else floor
        else:
            eff = None
        out = []
        for st in self.cur.advance(seq, event, eff):
            if st.complete:
                done = self.done + (st,)
                if len(done) == len(self.node.operands):
                    out.append(_SeqSt(self.node, done, None))
                else:
                    out.append(_SeqSt(self.node, done, _empty_state(self.node.operands[len(done)])))
            else:
                out.append(_SeqSt(self.node, self.done, st))
        return out

    def binds(self):
        for st in self.done:
            yield from st.binds()
        if self.cur is not None:
            yield from self.cur.binds()

    def scopes(self):
        # NOT scope of a completed SEQ: [first operand start, last operand start)
        if self.complete and self.node.nots:
            yield (self.node.nots, self.done[0].start, self.done[-1].start)
        for st in self.done:
            yield from st.scopes()


@dataclass(frozen=True)
class _AndSt:
    left: object
    right: object

    @property
    def empty(self):
        return self.left.empty and self.right.empty

    @property
    def complete(self):
        return self.left.complete and self.right.complete

    @property
    def start(self):
        if self.left.empty:
            return self.right.start
        if self.right.empty:
            return self.left.start
        return min(self.left.start, self.right.start)

    @property
    def end(self):
        if self.left.empty:
            return self.right.end
        if self.right.empty:
            return self.left.end
        return max(self.left.end, self.right.end)

    def advance(self, seq, event, floor):
        eff = floor if self.empty else None
        out = [_AndSt(st, self.right) for st in self.left.advance(seq, event, eff)]
        out += [_AndSt(self.left, st) for st in self.right.advance(seq, event, eff)]
        return out

    def binds(self):
        yield from self.left.binds()
        yield from self.right.binds()

    def scopes(self):
        yield from self.left.scopes()
        yield from self.right.scopes()


@dataclass(frozen=True)
class _OrSt:
    node: OrOp
    branch: object | None = None

    @property
    def empty(self):
        return self.branch is None or self.branch.empty

    @property
    def complete(self):
        return self.branch is not None and self.branch.complete

    @property
    def start(self):
        return self.branch.start

    @property
    def end(self):
        return self.branch.end

    def advance(self, seq, event, floor):
        if self.branch is None:
            out = [_OrSt(self.node, st)
                   for st in _empty_state(self.node.left).advance(seq, event, floor)]
            out += [_OrSt(self.node, st)
                    for st in _empty_state(self.node.right).advance(seq, event, floor)]
            return out
        return [_OrSt(self.node, st) for st in self.branch.advance(seq, event, floor)]

    def binds(self):
        if self.branch is not None:
            yield from self.branch.binds()

    def scopes(self):
        if self.branch is not None:
            yield from self.branch.scopes()


def _empty_state(node):
    if isinstance(node, Leaf):
        return _LeafSt(node)
    if isinstance(node, Seq):
        return _SeqSt(node, (), _empty_state(node.operands[0]))
    if isinstance(node, AndOp):
        return _AndSt(_empty_state(node.left), _empty_state(node.right))
    if isinstance(node, OrOp):
        return _OrSt(node)
    raise TypeError(node)


# --- guard evaluation --------------------------------------------------------

class _GuardEnv(exprlang.Env):
    strict_types = False

    def __init__(self, bindings, tables):
        self.bindings = bindings
        self.tables = tables

    def attr(self, var, attr):
        event = self.bindings.get(var)
        if event is None or attr not in event.attrs:
            raise exprlang.MissingName(f"{var}.{attr}")
        return event.attrs[attr]

    def table(self, name):
        if name not in self.tables:
            raise exprlang.MissingName(f"table {name}")
        return self.tables[name]


class _PatternState:
    def __init__(self, pattern: Pattern):
        self.pattern = pattern
        self.partials: list = []
        self.not_times: dict[str, list[int]] = {et: [] for et in pattern.not_etypes}


class CepEngine:
    def __init__(self, tables=None, make_id=None):
        self.tables = tables or {}
        self._serial = 0
        self._make_id = make_id or self._default_id
        self._states: dict[str, _PatternState] = {}
        self._order: list[str] = []
        self._seq = 0
        self._last_end: int | None = None

    def _default_id(self):
        self._serial += 1
        return f"cep-{self._serial}"

    # --- pattern management ---

    def add_pattern(self, pattern: Pattern):
        if pattern.name in self._states:
            raise ValueError(f"pattern {pattern.name!r} already active")
        self._states[pattern.name] = _PatternState(pattern)
        self._order.append(pattern.name)

    def remove_pattern(self, name: str):
        self._states.pop(name, None)
        if name in self._order:
            self._order.remove(name)

    @property
    def active_patterns(self) -> list[str]:
        return list(self._order)

    # --- stream processing ---

    def ingest(self, event: Event, now: int) -> list[Event]:
        if event.t_start > now:
            raise ValueError(f"event {event.id} is from the future (t_start {event.t_start} > now {now})")
        if self._last_end is not None and event.t_end < self._last_end:
            raise OutOfOrderEvent(
                f"event {event.id} t_end {event.t_end} precedes last ingested {self._last_end}")
        self._last_end = event.t_end
        seq = self._seq
        self._seq += 1

        detections: list[Event] = []
        for name in list(self._order):
            st = self._states[name]
            pattern = st.pattern
            if event.etype in st.not_times:
                st.not_times[event.etype].append(event.t_start)

            window = pattern.window_ms
            completed = []
            store = []
            for partial in st.partials:
                if not partial.empty and event.t_end > partial.start + window:
                    continue            # no future event can extend it either
                store.append(partial)
                for adv in partial.advance(seq, event, None):
                    (completed if adv.complete else store).append(adv)
            if event.t_end - event.t_start <= window:
                for adv in _empty_state(pattern.expr).advance(seq, event, None):
                    (completed if adv.complete else store).append(adv)

            candidates = [c for c in completed
                          if self._nots_hold(st, c) and self._guard_holds(pattern, c)]
            candidates.sort(key=self._candidate_key)

            if pattern.policy == "every":
                emitted = candidates
            else:
                emitted = []
                accepted_parts = []
                for cand in candidates:
                    part = self._partition_of(pattern, cand)
                    if part in accepted_parts:
                        continue
                    emitted.append(cand)
                    accepted_parts.append(part)
                    store = [p for p in store if self._partition_of(pattern, p) != part]
            st.partials = store
            detections.extend(self._detection(pattern, cand) for cand in emitted)
        return detections

    def expire(self, now: int) -> int:
        purged = 0
        for st in self._states.values():
            window = st.pattern.window_ms
            before = len(st.partials)
            st.partials = [p for p in st.partials if p.empty or p.start + window >= now]
            purged += before - len(st.partials)
            for etype, times in st.not_times.items():
                cut = bisect_left(times, now - window)
                if cut:
                    st.not_times[etype] = times[cut:]
        return purged

    # --- candidate evaluation ---

    @staticmethod
    def _candidate_key(state):
        return tuple(sorted((slot, seq) for slot, seq, _, _ in state.binds()))

    def _nots_hold(self, st: _PatternState, state) -> bool:
        for nots, scope_start, scope_end in state.scopes():
            for notref in nots:
                times = st.not_times.get(notref.etype, ())
                i = bisect_left(times, scope_start)
                if i < len(times) and times[i] < scope_end:
                    return False
        return True

    def _guard_holds(self, pattern: Pattern, state) -> bool:
        if pattern.guard is None:
            return True
        bindings = {var: event for _, _, event, var in state.binds() if var}
        try:
            result = exprlang.evaluate(pattern.guard, _GuardEnv(bindings, self.tables))
        except (exprlang.MissingName, exprlang.EvalTypeError):
            return False
        return result is True

    def _partition_of(self, pattern: Pattern, state):
        """Partition set by the first bound constituent; None when unkeyed."""
        if pattern.partition_key is None:
            return None
        first = min(state.binds(), key=lambda b: b[1])
        return first[2].attrs.get(pattern.partition_key)

    def _detection(self, pattern: Pattern, state) -> Event:
        binds = sorted(state.binds(), key=lambda b: b[0])
        attrs = {}
        for _, _, event, var in binds:
            if var:
                for k, v in event.attrs.items():
                    attrs[f"{var}.{k}"] = v
        start = min(e.t_start for _, _, e, _ in binds)
        end = max(e.t_end for _, _, e, _ in binds)
        return Event(
            id=self._make_id(),
            etype=pattern.name,
            topic=f"cep.{pattern.name}",
            t_start=start,
            t_end=end,
            source="cep",
            attrs=attrs,
            parents=tuple(e.id for _, _, e, _ in binds),
        )

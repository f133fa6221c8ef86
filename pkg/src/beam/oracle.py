"""Brute-force reference semantics for pattern matching.

Enumerates every way of binding log events to a pattern's leaf slots
(bounded exhaustive search, refused for logs over 50 events) and applies
the declarative rules:

  SEQ  - consecutive operands' intervals in strict precedence
         (next operand's start strictly after previous operand's end)
  AND  - both operands, any order
  OR   - exactly one branch
  NOT  - no event of that type with t_start in [first operand start,
         last operand start) of the enclosing SEQ match
  window - hull span (max t_end - min t_start) <= window_ms
  guard  - boolean over bindings; an unresolvable reference fails the guard
  policy - applied as a post-filter that simulates first-per-partition
           consumption over candidates ordered by completion

This module is the differential-testing twin of the incremental engine
and deliberately shares no matching logic with it.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import expr as exprlang
from .events import Event
from .patterns import AndOp, Leaf, OrOp, Pattern, Seq

MAX_ORACLE_LOG = 50


class LogTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class _Sub:
    slots: tuple[tuple[int, int], ...]   # (slot, log position), ascending slot
    posset: frozenset
    start: int
    end: int


class _GuardEnv(exprlang.Env):
    strict_types = False

    def __init__(self, bindings: dict[str, Event], tables):
        self.bindings = bindings
        self.tables = tables or {}

    def attr(self, var, attr):
        event = self.bindings.get(var)
        if event is None or attr not in event.attrs:
            raise exprlang.MissingName(f"{var}.{attr}")
        return event.attrs[attr]

    def table(self, name):
        if name not in self.tables:
            raise exprlang.MissingName(f"table {name}")
        return self.tables[name]


def _guard_holds(pattern: Pattern, bindings: dict[str, Event], tables) -> bool:
    if pattern.guard is None:
        return True
    try:
        result = exprlang.evaluate(pattern.guard, _GuardEnv(bindings, tables))
    except (exprlang.MissingName, exprlang.EvalTypeError):
        return False
    return result is True


def _expand(node, log: list[Event], window_ms: int) -> list[_Sub]:
    if isinstance(node, Leaf):
        return [_Sub(((node.slot, i),), frozenset((i,)), e.t_start, e.t_end)
                for i, e in enumerate(log) if e.etype == node.etype]
    if isinstance(node, OrOp):
        return _expand(node.left, log, window_ms) + _expand(node.right, log, window_ms)
    if isinstance(node, AndOp):
        out = []
        for a in _expand(node.left, log, window_ms):
            for b in _expand(node.right, log, window_ms):
                if a.posset & b.posset:
                    continue
                start, end = min(a.start, b.start), max(a.end, b.end)
                if end - start > window_ms:
                    continue
                out.append(_Sub(tuple(sorted(a.slots + b.slots)), a.posset | b.posset, start, end))
        return out
    if isinstance(node, Seq):
        # fold operands left to right under strict interval precedence,
        # tracking each partial chain as (sub, first_op_start, last_op_start)
        chains = [(sub, sub.start, sub.start) for sub in _expand(node.operands[0], log, window_ms)]
        for operand in node.operands[1:]:
            nxt = _expand(operand, log, window_ms)
            grown = []
            for sub, first_start, _ in chains:
                for op_sub in nxt:
                    if op_sub.start <= sub.end:
                        continue
                    if sub.posset & op_sub.posset:
                        continue
                    start = min(sub.start, op_sub.start)
                    end = max(sub.end, op_sub.end)
                    if end - start > window_ms:
                        continue
                    merged = _Sub(tuple(sorted(sub.slots + op_sub.slots)),
                                  sub.posset | op_sub.posset, start, end)
                    grown.append((merged, first_start, op_sub.start))
            chains = grown
        out = []
        for sub, first_start, last_start in chains:
            vetoed = False
            for notref in node.nots:
                if any(e.etype == notref.etype and first_start <= e.t_start < last_start
                       for e in log):
                    vetoed = True
                    break
            if not vetoed:
                out.append(sub)
        return out
    raise TypeError(node)


def _partition_of(pattern: Pattern, m: _Sub, log):
    """Partition = partition-key attribute of the first (earliest) constituent.

    Fixed at partial creation, so consumption cleanly isolates partition
    streams: a detection for partition p removes exactly the partials
    whose first constituent carried p.
    """
    if pattern.partition_key is None:
        return None
    return log[min(m.posset)].attrs.get(pattern.partition_key)


def _apply_policy(pattern: Pattern, matches: list[_Sub], log) -> list[_Sub]:
    if pattern.policy == "every":
        return matches
    ordered = sorted(matches, key=lambda m: (max(m.posset), m.slots))
    accepted: list[_Sub] = []
    consumed: list[tuple] = []          # (partition, completion position)
    for m in ordered:
        creation = min(m.posset)
        part = _partition_of(pattern, m, log)
        if any(part == a_part and creation <= a_completion
               for a_part, a_completion in consumed):
            continue                     # its partial was consumed by an earlier detection
        accepted.append(m)
        consumed.append((part, max(m.posset)))
    return accepted


def _detection(pattern: Pattern, m: _Sub, log, number: int) -> Event:
    attrs = {}
    var_by_slot = {leaf.slot: leaf.var for leaf in pattern.leaves}
    for slot, pos in m.slots:
        var = var_by_slot.get(slot)
        if var:
            for k, v in log[pos].attrs.items():
                attrs[f"{var}.{k}"] = v
    return Event(
        id=f"oracle-{number}",
        etype=pattern.name,
        topic=f"cep.{pattern.name}",
        t_start=m.start,
        t_end=m.end,
        source="oracle",
        attrs=attrs,
        parents=tuple(log[pos].id for _, pos in m.slots),
    )


def match_oracle(pattern: Pattern, log: list[Event], tables=None) -> list[Event]:
    """All detections of ``pattern`` over ``log``, sorted by (t_end, t_start)."""
    if len(log) > MAX_ORACLE_LOG:
        raise LogTooLarge(f"oracle refuses logs over {MAX_ORACLE_LOG} events (got {len(log)})")
    for prev, cur in zip(log, log[1:]):
        if cur.t_start < prev.t_start:
            raise ValueError("log must be in non-decreasing t_start order")

    matches = _expand(pattern.expr, log, pattern.window_ms)
    matches = [m for m in matches if m.end - m.start <= pattern.window_ms]

    if pattern.guard is not None:
        var_by_slot = {leaf.slot: leaf.var for leaf in pattern.leaves}
        kept = []
        for m in matches:
            bindings = {var_by_slot[slot]: log[pos] for slot, pos in m.slots if var_by_slot.get(slot)}
            if _guard_holds(pattern, bindings, tables):
                kept.append(m)
        matches = kept

    matches = _apply_policy(pattern, matches, log)
    matches.sort(key=lambda m: (m.end, m.start, m.slots))
    return [_detection(pattern, m, log, i) for i, m in enumerate(matches)]

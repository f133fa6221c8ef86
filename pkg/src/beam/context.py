"""Business context: typed key/value state, event-driven updates, conditions.

Keys are declared up front in the model's context schema.  A declaration
may be a template with ``{placeholder}`` segments (``fuel_{truck}``) so
per-entity metrics become families of keys; the placeholder is filled
from the attributes of the updating event.

Evaluation is strict: a condition that reads a declared key which has
never been written raises UnknownContextKey instead of silently being
false, so a missing data feed can never masquerade as a deliberate veto.
Updates are atomic change sets journaled per version; folding the journal
over the initial snapshot reproduces the current snapshot exactly.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from . import expr as exprlang
from .events import Event

TYPES = ("integer", "decimal", "boolean", "string", "clock")


class UndeclaredKey(KeyError):
    def __init__(self, key):
        self.key = key
        super().__init__(key)


class UnknownContextKey(KeyError):
    """Key is declared but has never been written (strict evaluation)."""

    def __init__(self, key):
        self.key = key
        super().__init__(key)


class TypeMismatch(TypeError):
    pass


@dataclass(frozen=True)
class KeyDecl:
    template: str                 # e.g. "clock" or "fuel_{truck}"
    ctype: str                    # one of TYPES
    init: object | None = None

    def pattern(self) -> re.Pattern:
        out = []
        for piece in re.split(r"(\{[^}]*\})", self.template):
            if piece.startswith("{"):
                out.append(r"[A-Za-z0-9_]+")
            else:
                out.append(re.escape(piece))
        return re.compile("^" + "".join(out) + "$")


@dataclass(frozen=True)
class Assignment:
    key_template: str
    key_ast: object
    value_ast: object
    value_text: str


@dataclass(frozen=True)
class ContextRule:
    on_etype: str
    assignments: tuple[Assignment, ...]


def make_rule(on_etype: str, assignments: list[tuple[str, str]]) -> ContextRule:
    parsed = []
    for key_template, value_text in assignments:
        key_ast = exprlang.parse(key_template)
        if not isinstance(key_ast, exprlang.Name):
            raise UndeclaredKey(key_template)
        parsed.append(Assignment(key_template, key_ast, exprlang.parse(value_text), value_text))
    return ContextRule(on_etype, tuple(parsed))


@dataclass(frozen=True)
class Condition:
    text: str
    ast: object


def parse_condition(text: str) -> Condition:
    return Condition(text, exprlang.parse(text))


@dataclass(frozen=True)
class ContextSnapshot:
    version: int
    values: dict
    updated_at: int


@dataclass
class ChangeSet:
    version: int
    t: int
    changes: dict

    def encode(self) -> str:
        obj = {"version": self.version, "t": self.t,
               "changes": {k: self.changes[k] for k in sorted(self.changes)}}
        return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def coerce(value, ctype: str):
    """Check/convert a value against a schema type; raises TypeMismatch."""
    if ctype == "integer":
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeMismatch(f"expected integer, got {value!r}")
        return value
    if ctype == "decimal":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeMismatch(f"expected decimal, got {value!r}")
        return float(value)
    if ctype == "boolean":
        if not isinstance(value, bool):
            raise TypeMismatch(f"expected boolean, got {value!r}")
        return value
    if ctype == "string":
        if not isinstance(value, str):
            raise TypeMismatch(f"expected string, got {value!r}")
        return value
    if ctype == "clock":
        if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value < 1440:
            raise TypeMismatch(f"expected clock-of-day minutes, got {value!r}")
        return value
    raise TypeMismatch(f"unknown type {ctype!r}")


class _AssignEnv(exprlang.Env):
    """Value expressions read event attrs first, then prior context."""

    def __init__(self, event: Event, store: "ContextStore"):
        self.event = event
        self.store = store

    def name(self, key: str):
        if key in self.event.attrs:
            return self.event.attrs[key]
        if self.store.declaration_for(key) is not None:
            if key in self.store._values:
                return self.store._values[key]
            raise UnknownContextKey(key)
        raise UndeclaredKey(key)

    def placeholder(self, ref: str):
        if ref in self.event.attrs:
            return self.event.attrs[ref]
        raise UndeclaredKey(ref)


class _CondEnv(exprlang.Env):
    def __init__(self, snapshot: ContextSnapshot, schema: list[KeyDecl], bindings: dict | None):
        self.snapshot = snapshot
        self.schema = schema
        self.bindings = bindings or {}
        self._patterns = [(d, d.pattern()) for d in schema]

    def name(self, key: str):
        if key in self.snapshot.values:
            return self.snapshot.values[key]
        for decl, pat in self._patterns:
            if pat.match(key):
                raise UnknownContextKey(key)
        raise UndeclaredKey(key)

    def placeholder(self, ref: str):
        if ref in self.bindings:
            return self.bindings[ref]
        raise UnknownContextKey(ref)


def evaluate_condition(condition: Condition, snapshot: ContextSnapshot,
                       schema: list[KeyDecl], bindings: dict | None = None) -> bool:
    """Pure strict evaluation of a condition against a snapshot."""
    result = exprlang.evaluate(condition.ast, _CondEnv(snapshot, schema, bindings))
    if not isinstance(result, bool):
        raise TypeMismatch(f"condition {condition.text!r} is not boolean")
    return result


def failing_atom(condition: Condition, snapshot: ContextSnapshot,
                 schema: list[KeyDecl], bindings: dict | None = None) -> str | None:
    """Source text of the first false conjunct, for audit attribution."""
    def conjuncts(node):
        if isinstance(node, exprlang.Binary) and node.op == "and":
            yield from conjuncts(node.left)
            yield from conjuncts(node.right)
        else:
            yield node
    env = _CondEnv(snapshot, schema, bindings)
    for atom in conjuncts(condition.ast):
        if exprlang.evaluate(atom, env) is False:
            return exprlang.render(atom)
    return None


class ContextStore:
    def __init__(self, schema: list[KeyDecl], rules: list[ContextRule] = (),
                 overrides: dict | None = None):
        self.schema = list(schema)
        self.rules = list(rules)
        self._patterns = [(d, d.pattern()) for d in self.schema]
        self._values: dict = {}
        self._version = 0
        self._updated_at = 0
        self._journal: list[ChangeSet] = []
        for decl in self.schema:
            if decl.init is not None:
                if "{" in decl.template:
                    raise TypeMismatch(f"templated key {decl.template!r} cannot take an initial value")
                self._values[decl.template] = coerce(decl.init, decl.ctype)
        for key, value in (overrides or {}).items():
            decl = self.declaration_for(key)
            if decl is None:
                raise UndeclaredKey(key)
            self._values[key] = coerce(value, decl.ctype)

    def declaration_for(self, key: str) -> KeyDecl | None:
        for decl, pat in self._patterns:
            if pat.match(key):
                return decl
        return None

    def apply(self, event: Event, rules: list[ContextRule] | None = None,
              t: int | None = None) -> list[str]:
        """Apply all matching rules atomically; returns keys that changed."""
        rules = self.rules if rules is None else rules
        t = event.t_end if t is None else t
        staged: dict = {}
        env = _AssignEnv(event, self)
        for rule in rules:
            if rule.on_etype != event.etype:
                continue
            for assignment in rule.assignments:
                key = exprlang.resolve_key(assignment.key_ast, env)
                decl = self.declaration_for(key)
                if decl is None:
                    raise UndeclaredKey(key)
                value = exprlang.evaluate(assignment.value_ast, env)
                staged[key] = coerce(value, decl.ctype)
        changed = {k: v for k, v in staged.items()
                   if k not in self._values or self._values[k] != v}
        if not changed:
            return []
        self._version += 1
        self._updated_at = t
        self._values.update(changed)
        self._journal.append(ChangeSet(self._version, t, dict(changed)))
        return list(changed)

    def snapshot(self) -> ContextSnapshot:
        return ContextSnapshot(self._version, dict(self._values), self._updated_at)

    def journal(self) -> list[ChangeSet]:
        return list(self._journal)

    def evaluate(self, condition: Condition, snapshot: ContextSnapshot | None = None,
                 bindings: dict | None = None) -> bool:
        return evaluate_condition(condition, snapshot or self.snapshot(), self.schema, bindings)

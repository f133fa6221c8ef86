"""Goal-tree runtime: traversal, goal lifecycle, subscription management.

Detected situations drive a deterministic depth-first traversal of the
goal tree.  A situation activates goals gated on it, marks goals achieved,
and triggers the reactions of active goals whose activating situation it
is.  Reaction conditions are evaluated strictly against the context
snapshot taken when the detection arrived: a false condition is audited
as a veto, an evaluation error (e.g. a never-written context key) as a
skip that suppresses only that action node.

The runtime's pattern subscriptions track the watchable frontier of the
tree: every active goal's own situations plus the activation situations
of its direct children.  Deeper awareness is not implicit - models widen
it with explicit Subscribe actions, which is exactly what those actions
are for.  Patterns referenced only by achieved subtrees are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import expr as exprlang
from .audit import AuditLog
from .context import (ContextSnapshot, TypeMismatch, UndeclaredKey,
                      UnknownContextKey, evaluate_condition, failing_atom)
from .events import Event, Scalar
from .san import ActionNode, GoalNode, SanModel


class UnknownPattern(KeyError):
    pass


@dataclass(frozen=True)
class ActionDirective:
    directive_id: str
    goal: str
    action: str
    kind: str                    # Notify | Command | Subscribe | Unsubscribe
    mode: str                    # auto | manual
    payload: dict                # fully resolved
    detection_id: str
    detection_etype: str
    context_version: int
    expiry_min: int | None = None


class _TemplateEnv(exprlang.Env):
    def __init__(self, detection: Event, snapshot: ContextSnapshot):
        self.detection = detection
        self.snapshot = snapshot

    def placeholder(self, ref: str):
        if "." in ref:
            if ref in self.detection.attrs:
                return self.detection.attrs[ref]
            raise UnknownContextKey(ref)
        if ref in self.snapshot.values:
            return self.snapshot.values[ref]
        raise UnknownContextKey(ref)


class SanRuntime:
    def __init__(self, model: SanModel, audit: AuditLog, engine=None, broker=None,
                 situation_sink=None):
        self.model = model
        self.audit = audit
        self.engine = engine
        self.broker = broker
        self.situation_sink = situation_sink
        self._goal_state = {g.name: "inactive" for g in model.goals()}
        self._goal_state[model.root.name] = "active"
        self._parent = {}
        for goal in model.goals():
            for sub in goal.subgoals:
                self._parent[sub.name] = goal.name
        self._subscribed: dict[str, str | None] = {}   # pattern -> bus sub id
        self._directive_subs: set[str] = set()
        self._suppressed: set[str] = set()
        self._next_directive = 0
        self.goal_listener = None                      # hook for the serve gateway

    # --- subscription management ---

    def _watch_set(self) -> list[str]:
        """Situations the tree itself warrants watching.

        Every active goal's own activation (reaction trigger) and
        achievement situations, plus the activation situations of the
        root's direct children so top-level goals can wake.  Deeper
        goals are not watched implicitly: widening awareness further is
        what explicit Subscribe actions are for.
        """
        wanted: list[str] = []

        def visit(goal: GoalNode, at_root: bool):
            if goal.activation and goal.activation not in wanted:
                wanted.append(goal.activation)
            if goal.achievement and goal.achievement not in wanted:
                wanted.append(goal.achievement)
            for sub in goal.subgoals:
                state = self._goal_state[sub.name]
                if state == "active":
                    visit(sub, False)
                elif state == "inactive" and at_root and sub.activation \
                        and sub.activation not in wanted:
                    wanted.append(sub.activation)

        if self._goal_state[self.model.root.name] == "active":
            visit(self.model.root, True)
        return wanted

    def _subscribe(self, pattern_name: str, t: int, reason: str):
        if pattern_name not in self.model.patterns:
            raise UnknownPattern(pattern_name)
        sub_id = None
        if self.engine is not None:
            self.engine.add_pattern(self.model.patterns[pattern_name])
        if self.broker is not None:
            sub_id = self.broker.subscribe("san-runtime", f"cep.{pattern_name}",
                                           handler=self.situation_sink)
        self._subscribed[pattern_name] = sub_id
        self.audit.append("subscribe", t, op="add", pattern=pattern_name, reason=reason)

    def _unsubscribe(self, pattern_name: str, t: int, reason: str):
        sub_id = self._subscribed.pop(pattern_name, None)
        if self.engine is not None:
            self.engine.remove_pattern(pattern_name)
        if self.broker is not None and sub_id is not None:
            self.broker.unsubscribe(sub_id)
        self.audit.append("subscribe", t, op="remove", pattern=pattern_name, reason=reason)

    def _sync(self, t: int, reason: str):
        wanted = [p for p in self._watch_set() if p not in self._suppressed]
        for p in self._directive_subs:
            if p not in wanted:
                wanted.append(p)
        for p in wanted:
            if p not in self._subscribed:
                self._subscribe(p, t, reason)
        for p in list(self._subscribed):
            if p not in wanted:
                self._unsubscribe(p, t, reason)

    def activate(self, t: int = 0) -> list[str]:
        """Register the initial subscription set; returns the pattern names."""
        self._sync(t, "initial")
        return sorted(self._subscribed)

    def subscriptions(self) -> list[str]:
        return sorted(self._subscribed)

    # --- traversal ---

    def goal_states(self) -> dict[str, str]:
        return dict(self._goal_state)

    def on_situation(self, detection: Event, snapshot: ContextSnapshot) -> list[ActionDirective]:
        if detection.etype not in self._subscribed:
            return []
        t = detection.t_end
        pending: list[tuple[ActionNode, GoalNode, dict]] = []
        transitions = False

        def eval_reactions(goal: GoalNode):
            for action in goal.reactions:
                if action.condition is not None:
                    try:
                        ok = evaluate_condition(action.condition, snapshot,
                                                self.model.schema, detection.attrs)
                    except (UnknownContextKey, UndeclaredKey, TypeMismatch,
                            exprlang.MissingName, exprlang.EvalTypeError) as exc:
                        self.audit.append("skip", t, goal=goal.name, action=action.name,
                                          condition=action.condition.text,
                                          error=f"{type(exc).__name__}: {exc}",
                                          detection=detection.id,
                                          context_version=snapshot.version)
                        continue
                    if not ok:
                        atom = failing_atom(action.condition, snapshot,
                                            self.model.schema, detection.attrs)
                        self.audit.append("veto", t, goal=goal.name, action=action.name,
                                          condition=action.condition.text,
                                          failed=atom or action.condition.text,
                                          detection=detection.id,
                                          context_version=snapshot.version)
                        continue
                try:
                    payload = self._resolve_payload(action, detection, snapshot)
                except (UnknownContextKey, UndeclaredKey, exprlang.MissingName) as exc:
                    self.audit.append("skip", t, goal=goal.name, action=action.name,
                                      condition=action.condition.text if action.condition else "",
                                      error=f"unresolved template: {exc}",
                                      detection=detection.id,
                                      context_version=snapshot.version)
                    continue
                pending.append((action, goal, payload))

        def walk(goal: GoalNode):
            nonlocal transitions
            state = self._goal_state[goal.name]
            if state == "active" and goal.achievement == detection.etype:
                self._goal_state[goal.name] = "achieved"
                self.audit.append("achievement", t, goal=goal.name, detection=detection.id)
                self._notify_goal(goal.name, "achieved", t)
                transitions = True
                return
            if state == "inactive":
                if goal.activation == detection.etype:
                    self._goal_state[goal.name] = "active"
                    self.audit.append("activation", t, goal=goal.name, detection=detection.id)
                    self._notify_goal(goal.name, "active", t)
                    transitions = True
                else:
                    return
            if self._goal_state[goal.name] != "active":
                return
            if goal.activation == detection.etype and goal.reactions:
                eval_reactions(goal)
            for sub in goal.subgoals:
                walk(sub)

        walk(self.model.root)
        if transitions:
            self._sync(t, "transition")

        pending.sort(key=lambda item: (item[0].priority, item[0].decl_index))
        directives = []
        for action, goal, payload in pending:
            self._next_directive += 1
            directives.append(ActionDirective(
                directive_id=f"d{self._next_directive}",
                goal=goal.name,
                action=action.name,
                kind=action.kind,
                mode=action.mode,
                payload=payload,
                detection_id=detection.id,
                detection_etype=detection.etype,
                context_version=snapshot.version,
                expiry_min=action.expiry_min,
            ))
        return directives

    def _notify_goal(self, goal: str, state: str, t: int):
        if self.goal_listener is not None:
            self.goal_listener(goal, state, t)

    def _resolve_payload(self, action: ActionNode, detection: Event,
                         snapshot: ContextSnapshot) -> dict:
        env = _TemplateEnv(detection, snapshot)
        if action.kind == "Notify":
            return {"audience": action.payload["audience"],
                    "message": _fill(action.payload["message"], env)}
        if action.kind == "Command":
            args = {k: _fill_typed(v, env) for k, v in action.payload["args"].items()}
            return {"target": action.payload["target"],
                    "verb": action.payload["verb"], "args": args}
        return dict(action.payload)

    # --- dynamic subscriptions ---

    def apply_subscription_directive(self, directive: ActionDirective, t: int) -> list[str]:
        pattern = directive.payload["pattern"]
        if pattern not in self.model.patterns:
            raise UnknownPattern(pattern)
        if directive.kind == "Subscribe":
            self._suppressed.discard(pattern)
            if pattern in self._subscribed:
                self.audit.append("subscribe", t, op="add", pattern=pattern,
                                  reason="directive", directive=directive.directive_id,
                                  noop=True)
            else:
                self._directive_subs.add(pattern)
                self._subscribe(pattern, t, "directive")
        else:
            if pattern not in self._subscribed:
                self.audit.append("subscribe", t, op="remove", pattern=pattern,
                                  reason="directive", directive=directive.directive_id,
                                  noop=True)
            else:
                self._directive_subs.discard(pattern)
                self._suppressed.add(pattern)
                self._unsubscribe(pattern, t, "directive")
        return self.subscriptions()


def _fill(template: str, env: _TemplateEnv) -> str:
    out = []
    i = 0
    while i < len(template):
        ch = template[i]
        if ch == "{":
            j = template.index("}", i)
            out.append(exprlang.canon_str(env.placeholder(template[i + 1:j].strip())))
            i = j + 1
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _fill_typed(template: str, env: _TemplateEnv) -> Scalar:
    """A value that is exactly one placeholder keeps its scalar type."""
    stripped = template.strip()
    if stripped.startswith("{") and stripped.endswith("}") and stripped.count("{") == 1:
        return env.placeholder(stripped[1:-1].strip())
    return _fill(template, env)

"""Action execution and human-in-the-loop recommendations.

Directives become bus events: notifications go to ``notify.<audience>``,
auto commands to ``cmd.<target>``, manual commands become recommendation
events on ``recommend.<audience>`` plus a pending entry awaiting an
operator decision on ``decision.operator``.  Subscribe/Unsubscribe
directives are forwarded to the runtime.

A command is executed at most once per directive: either on the auto path
or on operator accept, never both.  Every publish and every decision is
audited.  The ``auto_apply`` flag makes manual directives behave as auto
so headless runs need no operator.
"""

from __future__ import annotations

from dataclasses import dataclass

from .audit import AuditLog
from .bus import Broker
from .events import Event
from .runtime import ActionDirective, SanRuntime

DEFAULT_EXPIRY_MIN = 30
DEFAULT_COMMAND_AUDIENCE = "operator"


class UnknownTarget(KeyError):
    pass


class UnknownDirective(KeyError):
    pass


class AlreadyDecided(ValueError):
    pass


class Expired(ValueError):
    pass


@dataclass
class PendingRecommendation:
    directive: ActionDirective
    issued_at: int
    expires_at: int
    status: str = "pending"      # pending | accepted | rejected | expired
    event_id: str | None = None


@dataclass(frozen=True)
class OperatorDecision:
    directive_id: str
    decision: str                # accept | reject
    operator: str
    decided_at: int


class ActionService:
    def __init__(self, broker: Broker, runtime: SanRuntime, audit: AuditLog,
                 services: set[str], make_id, auto_apply: bool = False,
                 recommendation_listener=None):
        self.broker = broker
        self.runtime = runtime
        self.audit = audit
        self.services = set(services)
        self.make_id = make_id
        self.auto_apply = auto_apply
        self.pending: dict[str, PendingRecommendation] = {}
        self._executed: set[str] = set()
        self.recommendation_listener = recommendation_listener

    # --- dispatch ---

    def dispatch(self, directive: ActionDirective, now: int) -> list[Event]:
        if directive.kind == "Notify":
            return self._dispatch_notify(directive, now)
        if directive.kind == "Command":
            if directive.payload["target"] not in self.services:
                raise UnknownTarget(directive.payload["target"])
            if directive.mode == "manual" and not self.auto_apply:
                return self._dispatch_recommendation(directive, now)
            return [self._execute_command(directive, now, via="auto")]
        # Subscribe / Unsubscribe
        self.runtime.apply_subscription_directive(directive, now)
        self.audit.append("directive", now, directive=directive.directive_id,
                          directive_kind=directive.kind, goal=directive.goal,
                          action=directive.action, mode=directive.mode, outcome="applied",
                          pattern=directive.payload["pattern"],
                          detection=directive.detection_id,
                          context_version=directive.context_version)
        return []

    def _dispatch_notify(self, directive: ActionDirective, now: int) -> list[Event]:
        audience = directive.payload["audience"]
        event = Event(
            id=self.make_id(), etype="NotificationEvent", topic=f"notify.{audience}",
            t_start=now, t_end=now, source="actions",
            attrs={"audience": audience, "message": directive.payload["message"],
                   "directive_id": directive.directive_id,
                   "pattern": directive.detection_etype},
            parents=(directive.detection_id,),
        )
        self.broker.publish(event)
        self.audit.append("directive", now, directive=directive.directive_id,
                          directive_kind="Notify", goal=directive.goal, action=directive.action,
                          mode=directive.mode, outcome="notified", event=event.id,
                          detection=directive.detection_id,
                          context_version=directive.context_version)
        return [event]

    def _command_event(self, directive: ActionDirective, now: int) -> Event:
        payload = directive.payload
        attrs = {"target": payload["target"], "verb": payload["verb"],
                 "directive_id": directive.directive_id}
        attrs.update(payload["args"])
        return Event(
            id=self.make_id(), etype="CommandEvent", topic=f"cmd.{payload['target']}",
            t_start=now, t_end=now, source="actions", attrs=attrs,
            parents=(directive.detection_id,),
        )

    def _execute_command(self, directive: ActionDirective, now: int, via: str) -> Event:
        if directive.directive_id in self._executed:
            raise AlreadyDecided(f"directive {directive.directive_id} already executed")
        event = self._command_event(directive, now)
        self._executed.add(directive.directive_id)
        self.broker.publish(event)
        self.audit.append("directive", now, directive=directive.directive_id,
                          directive_kind="Command", goal=directive.goal, action=directive.action,
                          mode=directive.mode, outcome="executed", via=via, event=event.id,
                          detection=directive.detection_id,
                          context_version=directive.context_version)
        return event

    def _dispatch_recommendation(self, directive: ActionDirective, now: int) -> list[Event]:
        audience = directive.payload.get("audience", DEFAULT_COMMAND_AUDIENCE)
        expiry_min = directive.expiry_min if directive.expiry_min is not None else DEFAULT_EXPIRY_MIN
        expires_at = now + expiry_min * 60_000
        attrs = {"directive_id": directive.directive_id, "audience": audience,
                 "target": directive.payload["target"], "verb": directive.payload["verb"],
                 "pattern": directive.detection_etype, "expires_at": expires_at}
        attrs.update(directive.payload["args"])
        event = Event(
            id=self.make_id(), etype="RecommendationEvent", topic=f"recommend.{audience}",
            t_start=now, t_end=now, source="actions", attrs=attrs,
            parents=(directive.detection_id,),
        )
        rec = PendingRecommendation(directive, now, expires_at, event_id=event.id)
        self.pending[directive.directive_id] = rec
        self.broker.publish(event)
        self.audit.append("directive", now, directive=directive.directive_id,
                          directive_kind="Command", goal=directive.goal, action=directive.action,
                          mode=directive.mode, outcome="recommended", event=event.id,
                          expires_at=expires_at, detection=directive.detection_id,
                          context_version=directive.context_version)
        self._notify_rec(rec, now)
        return [event]

    # --- operator decisions ---

    def decide(self, decision: OperatorDecision, now: int) -> list[Event]:
        rec = self.pending.get(decision.directive_id)
        if rec is None:
            raise UnknownDirective(decision.directive_id)
        if rec.status in ("accepted", "rejected"):
            raise AlreadyDecided(decision.directive_id)
        if rec.status == "expired" or now > rec.expires_at:
            if rec.status == "pending":
                self._expire(rec, now)
            raise Expired(decision.directive_id)
        if decision.decision == "accept":
            rec.status = "accepted"
            event = self._execute_command(rec.directive, now, via=f"operator:{decision.operator}")
            self.audit.append("decision", now, directive=decision.directive_id,
                              decision="accept", operator=decision.operator, outcome="accepted")
            self._notify_rec(rec, now)
            return [event]
        rec.status = "rejected"
        self.audit.append("decision", now, directive=decision.directive_id,
                          decision="reject", operator=decision.operator, outcome="rejected")
        self._notify_rec(rec, now)
        return []

    def decide_from_event(self, event: Event):
        """Inbound OperatorDecision events from the decision.operator topic."""
        decision = OperatorDecision(
            directive_id=str(event.attrs.get("directive_id", "")),
            decision=str(event.attrs.get("decision", "")),
            operator=str(event.attrs.get("operator", "operator")),
            decided_at=event.t_end,
        )
        try:
            self.decide(decision, event.t_end)
        except (UnknownDirective, AlreadyDecided, Expired) as exc:
            self.audit.append("decision", event.t_end, directive=decision.directive_id,
                              decision=decision.decision, operator=decision.operator,
                              outcome=f"error:{type(exc).__name__}")

    def _expire(self, rec: PendingRecommendation, now: int):
        rec.status = "expired"
        self.audit.append("decision", now, directive=rec.directive.directive_id,
                          decision="none", operator="", outcome="expired")
        self._notify_rec(rec, now)

    def expire_pending(self, now: int) -> list[str]:
        expired = []
        for rec in self.pending.values():
            if rec.status == "pending" and now > rec.expires_at:
                self._expire(rec, now)
                expired.append(rec.directive.directive_id)
        return expired

    def _notify_rec(self, rec: PendingRecommendation, now: int):
        if self.recommendation_listener is not None:
            self.recommendation_listener(rec, now)

    # --- queries ---

    def audit_query(self, **kwargs):
        return self.audit.query(**kwargs)

    def pending_stats(self) -> dict[str, int]:
        stats = {"pending": 0, "accepted": 0, "rejected": 0, "expired": 0}
        for rec in self.pending.values():
            stats[rec.status] += 1
        return stats

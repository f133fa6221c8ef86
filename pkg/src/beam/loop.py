"""Closed-loop wiring: simulator -> bus -> CEP -> goal runtime -> actions -> simulator.

Everything runs on one flow of control.  Each tick the simulator's events
are published one by one; the bus drains each cascade (context update,
detection, traversal, dispatch, command handling) before the next event,
so detections land in the same tick as their final constituent and the
whole run is a pure function of (model, scenario, seed, ticks, decisions).

Event ids are sequential in publish order, which makes logs byte-identical
across reruns and lets replay regenerate pipeline outputs with the exact
ids of the recording: recorded input events are fed back verbatim while
detections, directives and action events are recomputed.
"""

from __future__ import annotations

import json
import re
import time
from pathlib import Path

from . import metrics as metrics_mod
from . import sim
from .actions import ActionService
from .audit import AuditLog
from .bus import Broker
from .cep import CepEngine
from .context import ContextStore
from .events import Event, encode
from .runtime import SanRuntime
from .san import SanModel


class IdSource:
    """Sequential event ids; replay syncs it from recorded ids."""

    def __init__(self, prefix: str = "e"):
        self.prefix = prefix
        self.n = 0
        self._re = re.compile(re.escape(prefix) + r"(\d+)$")

    def __call__(self) -> str:
        self.n += 1
        return f"{self.prefix}{self.n}"

    def sync(self, seen_id: str):
        m = self._re.match(seen_id)
        if m:
            self.n = max(self.n, int(m.group(1)))


class Pipeline:
    """Bus + CEP + context + runtime + actions, wired; no simulator."""

    def __init__(self, model: SanModel, services=("gis",), auto_apply=False,
                 gateway=None):
        self.model = model
        self.gateway = gateway
        self.make_id = IdSource()
        self.broker = Broker()
        self.audit = AuditLog()
        self.engine = CepEngine(tables=model.tables, make_id=self.make_id)
        self.store = ContextStore(model.schema, model.rules)
        self.runtime = SanRuntime(model, self.audit, engine=self.engine,
                                  broker=self.broker, situation_sink=self._on_detection_event)
        self.actions = ActionService(self.broker, self.runtime, self.audit,
                                     set(services), self.make_id, auto_apply=auto_apply)
        self.now_ms = 0

        self.broker.subscribe("context", "*", handler=self._on_any_context)
        self.broker.subscribe("cep", "*", handler=self._on_any_cep)
        self.broker.subscribe("action-service", "decision.operator",
                              handler=self.actions.decide_from_event)
        self.broker.subscribe("action-service", "sim.clock", handler=self._on_clock_actions)
        if gateway is not None:
            self.broker.subscribe("gateway", "*", handler=self._on_any_gateway)
            self.runtime.goal_listener = gateway.on_goal_change
            self.actions.recommendation_listener = gateway.on_recommendation

    # --- bus handlers, in subscription order ---

    def _on_any_context(self, event: Event):
        changed = self.store.apply(event, t=self.now_ms)
        if changed and self.gateway is not None:
            snap = self.store.snapshot()
            self.gateway.on_context_change(snap, {k: snap.values[k] for k in changed})

    def _on_any_cep(self, event: Event):
        if event.etype == "ClockTick":
            self.engine.expire(event.t_start)
        for detection in self.engine.ingest(event, now=self.now_ms):
            self.audit.append("detection", self.now_ms, id=detection.id,
                              pattern=detection.etype, t_start=detection.t_start,
                              t_end=detection.t_end, parents=list(detection.parents))
            self.broker.publish(detection)

    def _on_detection_event(self, detection: Event):
        snapshot = self.store.snapshot()
        directives = self.runtime.on_situation(detection, snapshot)
        for directive in directives:
            self.actions.dispatch(directive, self.now_ms)

    def _on_clock_actions(self, event: Event):
        self.actions.expire_pending(event.t_start)

    def _on_any_gateway(self, event: Event):
        self.gateway.on_event(event)

    # --- log access ---

    def event_lines(self) -> list[str]:
        return [encode(e) for e in self.broker.log]

    def audit_lines(self) -> list[str]:
        return self.audit.lines()

    def context_lines(self) -> list[str]:
        return [cs.encode() for cs in self.store.journal()]


class Runner(Pipeline):
    """Pipeline plus the simulated world driving it tick by tick."""

    def __init__(self, model: SanModel, config: dict, seed: int,
                 auto_apply: bool | None = None, gateway=None):
        options = config.get("options", {}) or {}
        if auto_apply is None:
            auto_apply = bool(options.get("auto_apply", False))
        services = config.get("services", ["gis"])
        super().__init__(model, services=services, auto_apply=auto_apply, gateway=gateway)
        self.config = config
        self.world = sim.init(config, seed)
        self.broker.subscribe("sim", "cmd.gis", handler=self._on_command)

    def _on_command(self, event: Event):
        for out in sim.handle_command(self.world, event, self.make_id):
            self.broker.publish(out)

    def run(self, ticks: int, pace_ms: int = 0, stop_flag=None) -> None:
        initial = self.runtime.activate(t=0)
        if self.gateway is not None:
            self.gateway.on_run_start(self, initial)
        for _ in range(ticks):
            if stop_flag is not None and stop_flag.is_set():
                break
            self.now_ms = self.world.tick * sim.TICK_MS
            if self.gateway is not None:
                for decision_event in self.gateway.drain_decisions(self.make_id, self.now_ms):
                    self.broker.publish(decision_event)
            for event in sim.step_events(self.world, self.make_id):
                self.broker.publish(event)
            if self.gateway is not None:
                self.gateway.on_tick_end(self.world.tick - 1, self.now_ms)
            if pace_ms:
                time.sleep(pace_ms / 1000.0)
        if self.gateway is not None:
            self.gateway.on_run_end()

    def write_outputs(self, out_dir) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "events.log").write_text(
            "".join(line + "\n" for line in self.event_lines()), encoding="utf-8")
        (out / "audit.log").write_text(
            "".join(line + "\n" for line in self.audit_lines()), encoding="utf-8")
        (out / "context.log").write_text(
            "".join(line + "\n" for line in self.context_lines()), encoding="utf-8")
        summary = metrics_mod.compute(self.event_lines(), self.audit_lines())
        (out / "metrics.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return summary


def run_closed_loop(model: SanModel, config: dict, seed: int, ticks: int,
                    auto_apply: bool | None = None) -> tuple[list[str], list[str]]:
    """One-call closed loop; returns (event log lines, audit log lines)."""
    runner = Runner(model, config, seed=seed, auto_apply=auto_apply)
    runner.run(ticks)
    return runner.event_lines(), runner.audit_lines()


REPLAYED_SOURCES = ("sim", "operator")


def replay(model: SanModel, recorded: list[Event], services=("gis",),
           auto_apply: bool | None = None) -> Pipeline:
    """Re-drive the engine from a recorded event log.

    Input events (simulator, operator) are fed back verbatim; detections
    and action events are regenerated and must reproduce the recording.
    The auto-apply flag is inferred from the recording unless given: a log
    with recommendation events was an operator run.
    """
    if auto_apply is None:
        auto_apply = not any(e.etype == "RecommendationEvent" for e in recorded)
    pipeline = Pipeline(model, services=services, auto_apply=auto_apply)
    pipeline.runtime.activate(t=0)
    for event in recorded:
        if event.source not in REPLAYED_SOURCES:
            pipeline.make_id.sync(event.id)
            continue
        pipeline.now_ms = max(pipeline.now_ms, event.t_end)
        pipeline.make_id.sync(event.id)
        pipeline.broker.publish(event)
    return pipeline

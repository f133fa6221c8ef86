"""Serve-mode gateway: streams run frames to dashboard clients.

One persistent bidirectional WebSocket per client.  Every frame is a text
message ``KIND payload`` where EVT/SIT payloads are canonical event lines
and the rest are JSON objects:

    server -> client: HELLO, SNAPSHOT, EVT, SIT, REC, CTX, GOAL
    client -> server: DEC {"directive_id", "decision", "operator"}

DEC frames are queued and injected into the run loop at the next tick
boundary as OperatorDecision events, so a served run's logs replay exactly
like a headless one.  The run loop never blocks on clients: frames are
fanned out through per-client queues owned by the gateway's own thread.
"""

from __future__ import annotations

import asyncio
import json
import threading

from .events import Event, encode

FRAME_KINDS = ("HELLO", "SNAPSHOT", "EVT", "SIT", "REC", "CTX", "GOAL", "DEC")


def rec_payload(rec) -> dict:
    directive = rec.directive
    return {
        "directive_id": directive.directive_id,
        "status": rec.status,
        "goal": directive.goal,
        "action": directive.action,
        "target": directive.payload.get("target"),
        "verb": directive.payload.get("verb"),
        "args": directive.payload.get("args", {}),
        "pattern": directive.detection_etype,
        "issued_at": rec.issued_at,
        "expires_at": rec.expires_at,
    }


class Gateway:
    def __init__(self, port: int = 8765, host: str = "127.0.0.1"):
        self.port = port
        self.host = host
        self._thread: threading.Thread | None = None
        self._loop: asyncio.AbstractEventLoop | None = None
        self._started = threading.Event()
        self._stopping = False
        self._clients: set[asyncio.Queue] = set()
        self._decisions: list[dict] = []
        self._decision_lock = threading.Lock()
        self._state_lock = threading.Lock()
        self._hello: dict | None = None
        self._runner = None

    # --- lifecycle (called from the run thread) ---

    def start(self):
        self._thread = threading.Thread(target=self._serve_thread, daemon=True)
        self._thread.start()
        if not self._started.wait(timeout=10):
            raise RuntimeError("gateway failed to start")

    def stop(self):
        if self._loop is None:
            return
        try:
            # let queued frames flush to connected clients before closing
            asyncio.run_coroutine_threadsafe(self._drain(), self._loop).result(timeout=15)
        except Exception:
            pass
        self._stopping = True
        self._loop.call_soon_threadsafe(self._stop_event.set)
        if self._thread is not None:
            self._thread.join(timeout=5)

    async def _drain(self, timeout: float = 10.0):
        deadline = asyncio.get_running_loop().time() + timeout
        while any(q.qsize() for q in self._clients):
            if asyncio.get_running_loop().time() > deadline:
                break
            await asyncio.sleep(0.02)
        await asyncio.sleep(0.2)    # last handed-off send may still be in flight

    @property
    def client_count(self) -> int:
        return len(self._clients)

    def wait_for_client(self, timeout: float) -> bool:
        """Block until at least one client is connected (or timeout)."""
        import time as _time
        deadline = _time.monotonic() + timeout
        while _time.monotonic() < deadline:
            if self._clients:
                return True
            _time.sleep(0.02)
        return bool(self._clients)

    # --- runner hooks (called from the run thread) ---

    def on_run_start(self, runner, initial_subscriptions):
        with self._state_lock:
            self._runner = runner
            self._hello = {
                "model": runner.model.name,
                "patterns": sorted(runner.model.patterns),
                "initial_subscriptions": initial_subscriptions,
                "tick_ms": 60_000,
                "auto_apply": runner.actions.auto_apply,
            }

    def on_event(self, event: Event):
        kind = "SIT" if event.topic.startswith("cep.") else "EVT"
        self._broadcast(f"{kind} {encode(event)}")

    def on_context_change(self, snapshot, changed: dict):
        payload = {"version": snapshot.version, "t": snapshot.updated_at,
                   "changes": {k: changed[k] for k in sorted(changed)}}
        self._broadcast("CTX " + json.dumps(payload, separators=(",", ":")))

    def on_goal_change(self, goal: str, state: str, t: int):
        self._broadcast("GOAL " + json.dumps({"goal": goal, "state": state, "t": t},
                                             separators=(",", ":")))

    def on_recommendation(self, rec, now: int):
        self._broadcast("REC " + json.dumps(rec_payload(rec), separators=(",", ":")))

    def on_tick_end(self, tick: int, now: int):
        pass

    def on_run_end(self):
        pass

    def drain_decisions(self, make_id, now: int) -> list[Event]:
        with self._decision_lock:
            drained, self._decisions = self._decisions, []
        events = []
        for dec in drained:
            events.append(Event(
                id=make_id(), etype="OperatorDecision", topic="decision.operator",
                t_start=now, t_end=now, source="operator",
                attrs={"directive_id": str(dec.get("directive_id", "")),
                       "decision": str(dec.get("decision", "")),
                       "operator": str(dec.get("operator", "operator"))},
            ))
        return events

    # --- gateway thread ---

    def _snapshot_payload(self) -> dict:
        with self._state_lock:
            runner = self._runner
            if runner is None:
                return {}
            snap = runner.store.snapshot()
            payload = {
                "tick": 0,
                "context": {"version": snap.version,
                            "values": {k: snap.values[k] for k in sorted(snap.values)}},
                "goals": runner.runtime.goal_states(),
                "subscriptions": runner.runtime.subscriptions(),
                "pending": [rec_payload(rec) for rec in runner.actions.pending.values()],
                "world": {},
            }
            world = getattr(runner, "world", None)
            if world is not None:
                payload["tick"] = world.tick
                payload["world"] = {
                    "depot": list(world.depot),
                    "customers": [{"id": c.id, "x": c.pos[0], "y": c.pos[1]}
                                  for c in world.customers.values()],
                    "zones": [{"id": z.id, "x": z.center[0], "y": z.center[1],
                               "r": z.radius} for z in world.zones],
                    "trucks": [{"id": t.id, "x": t.pos[0], "y": t.pos[1]}
                               for t in world.trucks.values()],
                }
            return payload

    def _broadcast(self, text: str):
        if self._loop is None or self._stopping:
            return
        self._loop.call_soon_threadsafe(self._push_all, text)

    def _push_all(self, text: str):
        for queue in self._clients:
            queue.put_nowait(text)

    def _serve_thread(self):
        asyncio.run(self._serve_main())

    async def _serve_main(self):
        from websockets.asyncio.server import serve

        self._loop = asyncio.get_running_loop()
        self._stop_event = asyncio.Event()
        async with serve(self._handler, self.host, self.port):
            self._started.set()
            await self._stop_event.wait()

    async def _handler(self, websocket):
        # register the frame queue before anything else: a client that is
        # connected when the run starts must not miss the first frames
        queue: asyncio.Queue = asyncio.Queue()
        self._clients.add(queue)
        try:
            while self._hello is None and not self._stopping:
                await asyncio.sleep(0.01)
            with self._state_lock:
                hello = dict(self._hello or {})
            await websocket.send("HELLO " + json.dumps(hello, separators=(",", ":")))
            await websocket.send("SNAPSHOT " + json.dumps(self._snapshot_payload(),
                                                          separators=(",", ":")))

            async def sender():
                while True:
                    await websocket.send(await queue.get())

            async def receiver():
                async for raw in websocket:
                    if not isinstance(raw, str) or not raw.startswith("DEC "):
                        continue
                    try:
                        payload = json.loads(raw[4:])
                    except json.JSONDecodeError:
                        continue
                    with self._decision_lock:
                        self._decisions.append(payload)

            done, pending = await asyncio.wait(
                [asyncio.create_task(sender()), asyncio.create_task(receiver())],
                return_when=asyncio.FIRST_COMPLETED)
            for task in pending:
                task.cancel()
        finally:
            self._clients.discard(queue)

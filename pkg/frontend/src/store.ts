// Dashboard read model, rebuilt purely from SNAPSHOT + subsequent frames.
// Reconnecting therefore always converges: the store is thrown away and a
// fresh SNAPSHOT replays the server's current state.

import {
  CtxPayload, Frame, GoalPayload, HelloPayload, RecPayload, SnapshotPayload,
  WireEvent, WorldPayload, encodeDecision,
} from "./protocol.js";

export interface RecCard {
  rec: RecPayload;
  decided: boolean;              // client -side lock: one DEC per card, ever
  serverFinal: boolean;          // accepted / rejected / expired echoed back
}

export interface LogRow {
  kind: "EVT" | "SIT";
  event: WireEvent;
}

export class DashboardStore {
  hello: HelloPayload | null = null;
  connected = false;
  tick = 0;
  clockMin: number | null = null;
  eventLog: LogRow[] = [];
  situations: WireEvent[] = [];
  notifications: WireEvent[] = [];
  cards = new Map<string, RecCard>();
  cardOrder: string[] = [];
  goals = new Map<string, string>();
  goalChanges: GoalPayload[] = [];
  context = new Map<string, string | number | boolean>();
  contextVersion = 0;
  world: WorldPayload = {};
  trucks = new Map<string, { x: number; y: number }>();
  subscriptions: string[] = [];

  reset(): void {
    this.tick = 0;
    this.clockMin = null;
    this.eventLog = [];
    this.situations = [];
    this.notifications = [];
    this.cards.clear();
    this.cardOrder = [];
    this.goals.clear();
    this.goalChanges = [];
    this.context.clear();
    this.contextVersion = 0;
    this.world = {};
    this.trucks.clear();
    this.subscriptions = [];
  }

  apply(frame: Frame): void {
    switch (frame.kind) {
      case "HELLO":
        this.hello = frame.payload;
        return;
      case "SNAPSHOT":
        this.applySnapshot(frame.payload);
        return;
      case "EVT":
        this.applyEvent("EVT", frame.payload);
        return;
      case "SIT":
        this.applyEvent("SIT", frame.payload);
        this.situations.push(frame.payload);
        return;
      case "REC":
        this.applyRec(frame.payload);
        return;
      case "CTX":
        this.contextVersion = frame.payload.version;
        for (const [key, value] of Object.entries(frame.payload.changes)) {
          this.context.set(key, value);
        }
        return;
      case "GOAL":
        this.goals.set(frame.payload.goal, frame.payload.state);
        this.goalChanges.push(frame.payload);
        return;
    }
  }

  private applySnapshot(snap: SnapshotPayload): void {
    this.reset();
    this.tick = snap.tick;
    this.contextVersion = snap.context.version;
    for (const [key, value] of Object.entries(snap.context.values)) {
      this.context.set(key, value);
    }
    for (const [goal, state] of Object.entries(snap.goals)) {
      this.goals.set(goal, state);
    }
    this.subscriptions = [...snap.subscriptions];
    for (const rec of snap.pending) {
      this.applyRec(rec);
    }
    this.world = snap.world ?? {};
    for (const truck of this.world.trucks ?? []) {
      this.trucks.set(truck.id, { x: truck.x, y: truck.y });
    }
  }

  private applyEvent(kind: "EVT" | "SIT", event: WireEvent): void {
    this.eventLog.push({ kind, event });
    if (event.etype === "ClockTick") {
      this.tick = Number(event.attrs["tick"] ?? this.tick);
      this.clockMin = Number(event.attrs["clock_min"] ?? this.clockMin ?? 0);
    } else if (event.etype === "GpsPositionEvent") {
      this.trucks.set(String(event.attrs["truck"]), {
        x: Number(event.attrs["x"]),
        y: Number(event.attrs["y"]),
      });
    } else if (event.topic.startsWith("notify.")) {
      this.notifications.push(event);
    }
  }

  private applyRec(rec: RecPayload): void {
    const existing = this.cards.get(rec.directive_id);
    if (existing === undefined) {
      this.cards.set(rec.directive_id, {
        rec,
        decided: false,
        serverFinal: rec.status !== "pending",
      });
      this.cardOrder.push(rec.directive_id);
      return;
    }
    existing.rec = rec;
    if (rec.status !== "pending") {
      existing.serverFinal = true;     // terminal server state locks the card
    }
  }

  // One DEC frame per card, no matter how often the button fires.
  decide(directiveId: string, decision: "accept" | "reject",
         operator = "dashboard"): string | null {
    const card = this.cards.get(directiveId);
    if (card === undefined || card.decided || card.serverFinal) {
      return null;
    }
    card.decided = true;
    return encodeDecision(directiveId, decision, operator);
  }

  expiryCountdownMin(card: RecCard): number {
    const nowMs = this.tick * (this.hello?.tick_ms ?? 60000);
    return Math.max(0, Math.round((card.rec.expires_at - nowMs) / 60000));
  }
}

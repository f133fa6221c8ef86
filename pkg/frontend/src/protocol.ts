// Serve-mode wire protocol: one text message per frame, "KIND payload".
// EVT/SIT payloads are canonical event lines; the rest are JSON objects.

export interface WireEvent {
  id: string;
  etype: string;
  topic: string;
  t_start: number;
  t_end: number;
  source: string;
  parents: string[];
  attrs: Record<string, string | number | boolean>;
}

export interface HelloPayload {
  model: string;
  patterns: string[];
  initial_subscriptions: string[];
  tick_ms: number;
  auto_apply: boolean;
}

export interface RecPayload {
  directive_id: string;
  status: "pending" | "accepted" | "rejected" | "expired";
  goal: string;
  action: string;
  target: string;
  verb: string;
  args: Record<string, string | number | boolean>;
  pattern: string;
  issued_at: number;
  expires_at: number;
}

export interface CtxPayload {
  version: number;
  t: number;
  changes: Record<string, string | number | boolean>;
}

export interface GoalPayload {
  goal: string;
  state: "inactive" | "active" | "achieved";
  t: number;
}

export interface WorldPayload {
  depot?: number[];
  customers?: { id: string; x: number; y: number }[];
  zones?: { id: string; x: number; y: number; r: number }[];
  trucks?: { id: string; x: number; y: number }[];
}

export interface SnapshotPayload {
  tick: number;
  context: { version: number; values: Record<string, string | number | boolean> };
  goals: Record<string, string>;
  subscriptions: string[];
  pending: RecPayload[];
  world: WorldPayload;
}

export type Frame =
  | { kind: "HELLO"; payload: HelloPayload }
  | { kind: "SNAPSHOT"; payload: SnapshotPayload }
  | { kind: "EVT"; payload: WireEvent }
  | { kind: "SIT"; payload: WireEvent }
  | { kind: "REC"; payload: RecPayload }
  | { kind: "CTX"; payload: CtxPayload }
  | { kind: "GOAL"; payload: GoalPayload };

const KINDS = new Set(["HELLO", "SNAPSHOT", "EVT", "SIT", "REC", "CTX", "GOAL"]);

export function parseFrame(raw: string): Frame {
  const space = raw.indexOf(" ");
  if (space < 0) {
    throw new Error(`malformed frame: ${raw.slice(0, 40)}`);
  }
  const kind = raw.slice(0, space);
  if (!KINDS.has(kind)) {
    throw new Error(`unknown frame kind: ${kind}`);
  }
  const payload = JSON.parse(raw.slice(space + 1));
  return { kind, payload } as Frame;
}

export function encodeDecision(directiveId: string, decision: "accept" | "reject",
                               operator: string): string {
  return "DEC " + JSON.stringify({
    directive_id: directiveId,
    decision,
    operator,
  });
}

// End-to-end: a real served run driven through the dashboard read model.
// Spawns the Python CLI (expects `beam` on PATH or $BEAM_CLI), connects
// over WebSocket, and checks the human-in-the-loop contract plus frame
// completeness against the run's own log files.

import { spawn, spawnSync, ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import { afterEach, describe, expect, it } from "vitest";
import WebSocket from "ws";

import { parseFrame, Frame } from "../src/protocol.js";
import { DashboardStore } from "../src/store.js";
import { renderEventLog, renderGoals, renderRecommendations, renderSituations } from "../src/render.js";

const REPO = resolve(__dirname, "..", "..");
const MODEL = join(REPO, "scenarios", "pilot.san");
const SCENARIO = join(REPO, "scenarios", "pilot.yaml");
const BEAM = process.env.BEAM_CLI ?? "beam";

let running: ChildProcess | null = null;

afterEach(() => {
  if (running && running.exitCode === null) {
    running.kill("SIGKILL");
  }
  running = null;
});

function startRun(port: number, outDir: string, extra: string[] = []): ChildProcess {
  const child = spawn(BEAM, [
    "run", "--model", MODEL, "--scenario", SCENARIO,
    "--seed", "1", "--ticks", "320", "--out", outDir,
    "--serve", "--port", String(port), "--pace-ms", "2", "--serve-wait", "30",
    ...extra,
  ], { stdio: ["ignore", "pipe", "pipe"] });
  running = child;
  return child;
}

async function connect(port: number, attempts = 200): Promise<WebSocket> {
  for (let i = 0; i < attempts; i++) {
    try {
      const ws = new WebSocket(`ws://127.0.0.1:${port}`);
      await new Promise<void>((resolveOpen, rejectOpen) => {
        ws.once("open", () => resolveOpen());
        ws.once("error", rejectOpen);
      });
      return ws;
    } catch {
      await new Promise((r) => setTimeout(r, 100));
    }
  }
  throw new Error("could not connect to serve gateway");
}

interface Driver {
  onFrame?: (frame: Frame, store: DashboardStore, ws: WebSocket) => void;
}

async function driveRun(child: ChildProcess, ws: WebSocket, driver: Driver = {}) {
  const store = new DashboardStore();
  const counts = { EVT: 0, SIT: 0, REC: 0, GOAL: 0, CTX: 0 };
  const frames: Frame[] = [];
  const closed = new Promise<void>((resolveClose) => ws.once("close", () => resolveClose()));
  ws.on("message", (raw) => {
    const frame = parseFrame(String(raw));
    frames.push(frame);
    if (frame.kind in counts) {
      counts[frame.kind as keyof typeof counts] += 1;
    }
    store.apply(frame);
    driver.onFrame?.(frame, store, ws);
  });
  const exited = new Promise<number>((resolveExit) =>
    child.once("exit", (code) => resolveExit(code ?? -1)));
  const code = await exited;
  await Promise.race([closed, new Promise((r) => setTimeout(r, 2000))]);
  return { store, counts, frames, code };
}

function readLines(path: string): string[] {
  return readFileSync(path, "utf-8").split("\n").filter((l) => l.trim().length > 0);
}

describe("human-in-the-loop against a live served run", () => {
  it("shows the reroute recommendation promptly; accept executes exactly once",
     { timeout: 180_000 }, async () => {
    const out = mkdtempSync(join(tmpdir(), "beam-accept-"));
    const child = startRun(8871, out);
    const ws = await connect(8871);

    let recSeenAtTick = -1;
    let decFrames = 0;
    const { store, code } = await driveRun(child, ws, {
      onFrame: (frame, st, sock) => {
        if (frame.kind === "REC" && frame.payload.status === "pending") {
          recSeenAtTick = st.tick;
          // the card is rendered with its controls the moment the frame lands
          const html = renderRecommendations(st);
          expect(html).toContain(`data-accept="${frame.payload.directive_id}"`);
          expect(html).toContain("reroute");
          // scripted double-click: the store lock allows exactly one DEC
          const first = st.decide(frame.payload.directive_id, "accept", "e2e");
          const second = st.decide(frame.payload.directive_id, "accept", "e2e");
          if (first !== null) {
            sock.send(first);
            decFrames += 1;
          }
          if (second !== null) {
            sock.send(second);
            decFrames += 1;
          }
        }
      },
    });

    expect(code).toBe(0);
    expect(decFrames).toBe(1);
    // the detection fires at tick 240; the card was on screen within a tick
    expect(recSeenAtTick).toBeGreaterThanOrEqual(240);
    expect(recSeenAtTick).toBeLessThanOrEqual(241);
    expect(store.cards.values().next().value?.rec.status).toBe("accepted");

    const events = readLines(join(out, "events.log"));
    const commands = events.filter((l) => JSON.parse(l).etype === "CommandEvent");
    expect(commands.length).toBe(1);
    const audit = readLines(join(out, "audit.log")).map((l) => JSON.parse(l));
    const decisions = audit.filter((e) => e.kind === "decision");
    expect(decisions.length).toBe(1);
    expect(decisions[0].outcome).toBe("accepted");
  });

  it("reject publishes no command", { timeout: 180_000 }, async () => {
    const out = mkdtempSync(join(tmpdir(), "beam-reject-"));
    const child = startRun(8872, out);
    const ws = await connect(8872);

    const { store, code } = await driveRun(child, ws, {
      onFrame: (frame, st, sock) => {
        if (frame.kind === "REC" && frame.payload.status === "pending") {
          const dec = st.decide(frame.payload.directive_id, "reject", "e2e");
          if (dec !== null) sock.send(dec);
        }
      },
    });

    expect(code).toBe(0);
    expect(store.cards.values().next().value?.rec.status).toBe("rejected");
    const events = readLines(join(out, "events.log"));
    expect(events.filter((l) => JSON.parse(l).etype === "CommandEvent").length).toBe(0);
    expect(events.filter((l) => JSON.parse(l).etype === "RouteChanged").length).toBe(0);
    const audit = readLines(join(out, "audit.log")).map((l) => JSON.parse(l));
    expect(audit.filter((e) => e.kind === "decision" && e.outcome === "rejected").length).toBe(1);
  });
});

describe("frame completeness over a full recorded run", () => {
  it("renders one event-log entry per recorded event and one element per SIT/REC/GOAL frame",
     { timeout: 180_000 }, async () => {
    // headless recording first: byte-identical determinism makes the served
    // twin stream exactly these events
    const recordedOut = mkdtempSync(join(tmpdir(), "beam-rec-"));
    const headless = spawnSync(BEAM, [
      "run", "--model", MODEL, "--scenario", SCENARIO,
      "--seed", "1", "--ticks", "320", "--out", recordedOut, "--auto-apply",
    ], { encoding: "utf-8" });
    expect(headless.status).toBe(0);
    const recorded = readLines(join(recordedOut, "events.log"));
    expect(recorded.length).toBeGreaterThanOrEqual(500);

    const out = mkdtempSync(join(tmpdir(), "beam-served-"));
    const child = startRun(8873, out, ["--auto-apply"]);
    const ws = await connect(8873);
    const { store, counts, code } = await driveRun(child, ws);

    expect(code).toBe(0);
    const served = readLines(join(out, "events.log"));
    expect(served.length).toBe(recorded.length);

    // every recorded event became a frame and one event-log row
    expect(counts.EVT + counts.SIT).toBe(recorded.length);
    expect(store.eventLog.length).toBe(recorded.length);
    const logHtml = renderEventLog(store);
    expect((logHtml.match(/data-evt=/g) ?? []).length).toBe(recorded.length);

    // one panel element per SIT/REC/GOAL frame
    expect((renderSituations(store).match(/data-sit=/g) ?? []).length).toBe(counts.SIT);
    expect((renderRecommendations(store).match(/data-rec=/g) ?? []).length)
      .toBe(new Set(store.cardOrder).size);
    expect(counts.REC).toBe(0);          // auto-apply run: no recommendations
    const goalHtml = renderGoals(store);
    for (const change of store.goalChanges) {
      expect(goalHtml).toContain(`data-goal="${change.goal}"`);
    }
    expect(counts.GOAL).toBeGreaterThanOrEqual(2);   // two goal activations
    expect(counts.SIT).toBe(2);                      // opportunity + stop added
  });
});

// Browser entry point: connect, feed frames to the store, render panels,
// send operator decisions.  Reconnects automatically; the read model is
// rebuilt from the fresh SNAPSHOT so no client-side persistence is needed.

import { parseFrame } from "./protocol.js";
import { DashboardStore } from "./store.js";
import {
  renderContext, renderEventLog, renderGoals, renderMap, renderNotifications,
  renderRecommendations, renderSituations, renderStatus,
} from "./render.js";

const store = new DashboardStore();
let socket: WebSocket | null = null;
let dirty = false;

function wsUrl(): string {
  const fromHash = window.location.hash.slice(1);
  return fromHash.startsWith("ws") ? fromHash : "ws://localhost:8765";
}

function panel(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing panel #${id}`);
  return el;
}

function render(): void {
  dirty = false;
  panel("status").innerHTML = renderStatus(store);
  panel("situations").innerHTML = renderSituations(store);
  panel("notifications").innerHTML = renderNotifications(store);
  panel("recommendations").innerHTML = renderRecommendations(store);
  panel("goals").innerHTML = renderGoals(store);
  panel("context").innerHTML = renderContext(store);
  panel("map").innerHTML = renderMap(store);
  panel("eventlog").innerHTML = renderEventLog(store);
  const log = panel("eventlog");
  log.scrollTop = log.scrollHeight;
}

function scheduleRender(): void {
  if (!dirty) {
    dirty = true;
    requestAnimationFrame(render);
  }
}

function connect(): void {
  const ws = new WebSocket(wsUrl());
  socket = ws;
  ws.onmessage = (msg) => {
    if (typeof msg.data !== "string") return;
    try {
      store.apply(parseFrame(msg.data));
    } catch (err) {
      console.warn("bad frame", err);
      return;
    }
    scheduleRender();
  };
  ws.onopen = () => {
    store.connected = true;
    scheduleRender();
  };
  ws.onclose = () => {
    store.connected = false;
    scheduleRender();
    setTimeout(connect, 1000);
  };
  ws.onerror = () => ws.close();
}

document.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  const accept = target.getAttribute("data-accept");
  const reject = target.getAttribute("data-reject");
  const id = accept ?? reject;
  if (id === null || socket === null || socket.readyState !== WebSocket.OPEN) {
    return;
  }
  const frame = store.decide(id, accept !== null ? "accept" : "reject");
  if (frame !== null) {
    socket.send(frame);
    scheduleRender();
  }
});

connect();

// Pure HTML projections of the store: one function per panel.
// Every SIT/REC/GOAL frame yields exactly one element with a data-* hook,
// which is what the frame-completeness tests count.

import { DashboardStore, RecCard } from "./store.js";
import { WireEvent } from "./protocol.js";

function esc(value: unknown): string {
  return String(value)
    .replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function tickOf(event: WireEvent): number {
  return Math.floor(event.t_end / 60000);
}

export function renderSituations(store: DashboardStore): string {
  const rows = store.situations.map((s) => {
    const attrs = Object.entries(s.attrs)
      .map(([k, v]) => `${esc(k)}=${esc(v)}`).join(" ");
    return `<li class="situation" data-sit="${esc(s.id)}">` +
      `<b>${esc(s.etype)}</b> @tick ${tickOf(s)} <span>${attrs}</span></li>`;
  });
  return `<ul class="situations">${rows.join("")}</ul>`;
}

export function renderNotifications(store: DashboardStore): string {
  const rows = store.notifications.map((n) =>
    `<li class="notification" data-evt="${esc(n.id)}">` +
    `[${esc(n.attrs["audience"])}] ${esc(n.attrs["message"])}</li>`);
  return `<ul class="notifications">${rows.join("")}</ul>`;
}

export function renderRecommendation(store: DashboardStore, card: RecCard): string {
  const rec = card.rec;
  const args = Object.entries(rec.args).map(([k, v]) => `${esc(k)}=${esc(v)}`).join(" ");
  const locked = card.decided || card.serverFinal;
  const buttons = locked
    ? `<span class="status status-${esc(rec.status)}">${esc(rec.status)}</span>`
    : `<button data-accept="${esc(rec.directive_id)}">accept</button>` +
      `<button data-reject="${esc(rec.directive_id)}">reject</button>`;
  const expiry = rec.status === "pending"
    ? `<span class="countdown">expires in ${store.expiryCountdownMin(card)} min</span>` : "";
  return `<div class="card" data-rec="${esc(rec.directive_id)}" data-status="${esc(rec.status)}">` +
    `<b>${esc(rec.pattern)}</b> &rarr; ${esc(rec.target)} ${esc(rec.verb)} ${args} ` +
    `${expiry}${buttons}</div>`;
}

export function renderRecommendations(store: DashboardStore): string {
  const cards = store.cardOrder
    .map((id) => store.cards.get(id))
    .filter((card): card is RecCard => card !== undefined)
    .map((card) => renderRecommendation(store, card));
  return `<div class="recommendations">${cards.join("")}</div>`;
}

export function renderGoals(store: DashboardStore): string {
  const rows = [...store.goals.entries()].map(([goal, state]) =>
    `<li class="goal goal-${esc(state)}" data-goal="${esc(goal)}">` +
    `${esc(goal)}: <b>${esc(state)}</b></li>`);
  return `<ul class="goals">${rows.join("")}</ul>`;
}

export function renderContext(store: DashboardStore): string {
  const rows = [...store.context.entries()].sort(([a], [b]) => a.localeCompare(b))
    .map(([key, value]) =>
      `<tr data-ctx-key="${esc(key)}"><td>${esc(key)}</td><td>${esc(value)}</td></tr>`);
  return `<table class="context"><tbody>${rows.join("")}</tbody></table>` +
    `<p class="ctx-version">version ${store.contextVersion}</p>`;
}

export function renderEventLog(store: DashboardStore): string {
  const rows = store.eventLog.map(({ kind, event }) =>
    `<li class="logrow logrow-${kind.toLowerCase()}" data-evt="${esc(event.id)}">` +
    `${tickOf(event)} ${esc(event.topic)} ${esc(event.etype)}</li>`);
  return `<ol class="eventlog">${rows.join("")}</ol>`;
}

export function renderMap(store: DashboardStore): string {
  const world = store.world;
  const xs: number[] = [];
  const ys: number[] = [];
  for (const z of world.zones ?? []) { xs.push(z.x - z.r, z.x + z.r); ys.push(z.y - z.r, z.y + z.r); }
  for (const c of world.customers ?? []) { xs.push(c.x); ys.push(c.y); }
  for (const t of store.trucks.values()) { xs.push(t.x); ys.push(t.y); }
  if (world.depot) { xs.push(world.depot[0] ?? 0); ys.push(world.depot[1] ?? 0); }
  if (xs.length === 0) { xs.push(0, 1); ys.push(0, 1); }
  const pad = 10;
  const minX = Math.min(...xs) - pad, maxX = Math.max(...xs) + pad;
  const minY = Math.min(...ys) - pad, maxY = Math.max(...ys) + pad;
  const parts: string[] = [];
  for (const z of world.zones ?? []) {
    parts.push(`<circle class="zone" data-zone="${esc(z.id)}" cx="${z.x}" cy="${z.y}" r="${z.r}"/>`);
  }
  if (world.depot) {
    parts.push(`<rect class="depot" x="${(world.depot[0] ?? 0) - 2}" y="${(world.depot[1] ?? 0) - 2}" width="4" height="4"/>`);
  }
  for (const c of world.customers ?? []) {
    parts.push(`<circle class="customer" data-customer="${esc(c.id)}" cx="${c.x}" cy="${c.y}" r="1.5"/>` +
      `<text x="${c.x + 2}" y="${c.y - 2}">${esc(c.id)}</text>`);
  }
  for (const [id, pos] of store.trucks.entries()) {
    parts.push(`<circle class="truck" data-truck="${esc(id)}" cx="${pos.x}" cy="${pos.y}" r="2"/>` +
      `<text x="${pos.x + 2.5}" y="${pos.y + 1}">${esc(id)}</text>`);
  }
  const viewBox = `${minX} ${minY} ${maxX - minX} ${maxY - minY}`;
  return `<svg class="map" viewBox="${esc(viewBox)}" preserveAspectRatio="xMidYMid meet">` +
    parts.join("") + `</svg>`;
}

export function renderStatus(store: DashboardStore): string {
  const clock = store.clockMin === null ? "--:--"
    : `${String(Math.floor(store.clockMin / 60)).padStart(2, "0")}:` +
      `${String(store.clockMin % 60).padStart(2, "0")}`;
  const model = store.hello ? store.hello.model : "(no model)";
  const banner = store.connected ? ""
    : `<span class="banner">connection lost - reconnecting</span>`;
  return `<span class="model">${esc(model)}</span> tick ${store.tick} ` +
    `clock ${clock} ctx v${store.contextVersion} ${banner}`;
}

/** DOM rendering: thin, stateless projections of ConsoleState. */

import { buildReportChart } from "./chart.js";
import { eventSummary, t0 } from "./format.js";
import { openCardCount, visibleCards, type ConsoleState } from "./state.js";
import type { ConsoleSession } from "./session.js";

function el(tag: string, cls?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderTopBar(root: HTMLElement, state: ConsoleState): void {
  root.replaceChildren();
  const dot = el("span", `dot ${state.connection === "live" ? "live" : "dead"}`);
  root.append(
    dot,
    el("span", "clock", t0(state.simNow)),
    el("span", "stat", `role ${state.role}`),
    el("span", "stat", `${state.eventsSeen} events`),
    el("span", "stat", state.runFinished ? "run finished" : state.connection),
  );
  const toggle = el("label", "toggle") as HTMLLabelElement;
  const box = document.createElement("input");
  box.type = "checkbox";
  box.checked = state.showAll;
  box.id = "show-all";
  toggle.append(box, document.createTextNode(" all events"));
  root.append(toggle);
}

export function renderFeed(root: HTMLElement, state: ConsoleState): void {
  root.replaceChildren();
  for (const event of [...state.feed].reverse()) {
    const row = el("div", `row etype-${event.etype}`);
    row.append(
      el("span", "r-time", t0(event.ts)),
      el("span", "r-type", event.etype),
      el("span", "r-text", eventSummary(event.etype, event.attrs)),
    );
    root.append(row);
  }
  if (!state.feed.length) root.append(el("div", "empty", "no events for this role yet"));
}

export function renderCards(root: HTMLElement, state: ConsoleState, session: ConsoleSession): void {
  root.replaceChildren();
  const cards = visibleCards(state);
  if (!cards.length) {
    root.append(el("div", "empty", "nothing awaiting a decision"));
    return;
  }
  for (const card of cards) {
    const box = el("div", `card ${card.state}`);
    box.append(el("div", "card-title", card.title));
    box.append(el("div", "card-meta", `${card.kind} · ${card.role} · ${t0(card.issued_ts)}`));
    if (card.state === "open" || card.state === "posting") {
      const row = el("div", "card-actions");
      for (const option of card.options) {
        const button = el("button", "choice", option.label) as HTMLButtonElement;
        button.disabled = card.state === "posting";
        button.onclick = () => void session.submitChoice(card.id, option.id);
        row.append(button);
      }
      box.append(row);
    } else if (card.state === "chosen") {
      box.append(el("div", "card-done", `chosen: ${card.chosen}`));
    } else {
      box.append(el("div", "card-stale", "already decided elsewhere"));
    }
    root.append(box);
  }
}

export function renderChart(root: HTMLElement, state: ConsoleState): void {
  root.replaceChildren();
  if (!state.latestReport) {
    root.append(el("div", "empty", "no report yet (first one at t0+5:00)"));
    return;
  }
  const chart = buildReportChart(state.latestReport);
  const svgns = "http://www.w3.org/2000/svg";
  const svg = document.createElementNS(svgns, "svg");
  svg.setAttribute("viewBox", `0 0 ${chart.width} ${chart.height}`);
  for (const [label, , y] of chart.guides) {
    const line = document.createElementNS(svgns, "line");
    line.setAttribute("x1", "28");
    line.setAttribute("x2", String(chart.width - 28));
    line.setAttribute("y1", String(y));
    line.setAttribute("y2", String(y));
    line.setAttribute("class", "guide");
    svg.append(line);
    const text = document.createElementNS(svgns, "text");
    text.setAttribute("x", "2");
    text.setAttribute("y", String(y + 4));
    text.setAttribute("class", "guide-label");
    text.textContent = label;
    svg.append(text);
  }
  for (const series of chart.series) {
    const path = document.createElementNS(svgns, "path");
    path.setAttribute("d", series.path);
    path.setAttribute("stroke", series.color);
    path.setAttribute("fill", "none");
    svg.append(path);
  }
  root.append(svg);
  const caption = el(
    "div",
    "chart-caption",
    `${t0(chart.windowFrom)} to ${t0(chart.windowTo)} · ${chart.series.length} sensors`,
  );
  root.append(caption);
}

export function renderBoards(root: HTMLElement, state: ConsoleState): void {
  root.replaceChildren();
  const processBoard = el("div", "board");
  processBoard.append(el("h3", undefined, "processes"));
  for (const [iid, inst] of Object.entries(state.processes)) {
    const row = el("div", "proc-row");
    row.append(el("span", "proc-name", iid));
    for (const [aid, activity] of Object.entries(inst.activities)) {
      row.append(el("span", `pill ${activity.status}`, `${aid}: ${activity.status}`));
    }
    processBoard.append(row);
  }
  const inventoryBoard = el("div", "board");
  inventoryBoard.append(el("h3", undefined, "inventory"));
  for (const [kind, level] of Object.entries(state.inventory)) {
    inventoryBoard.append(
      el("div", "inv-row", `${kind}: ${level.available} available / ${level.committed} committed / ${level.total} total`),
    );
  }
  for (const [rid, reservation] of Object.entries(state.reservations)) {
    inventoryBoard.append(
      el(
        "div",
        "inv-row sub",
        `${rid}: ${reservation.committed}/${reservation.requested} ${reservation.kind} for ${reservation.holder}` +
          (reservation.active ? ` (confirmed for ${t0(reservation.confirmed_for_ts)})` : " (released)"),
      ),
    );
  }
  root.append(processBoard, inventoryBoard);
}

export function renderBadge(root: HTMLElement, state: ConsoleState): void {
  const open = openCardCount(state);
  root.textContent = open ? `${open} open` : "";
}

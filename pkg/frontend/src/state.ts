/** Console state: a pure client-side reduction of the event stream.
 *
 * Every field mirrors an event or an API response; nothing here is
 * authoritative.  The store is DOM-free so the whole reduction logic runs
 * under plain node tests (and headless end-to-end sessions).
 */

import type { DecisionPoint, EventLine, InventoryLevels, ProcessInstances, Proposal, ReservationView } from "./types.js";
import { actsFor, feedEtypesFor, type Role } from "./roles.js";

export type CardState = "open" | "posting" | "chosen" | "stale";

export interface Card {
  /** decision point or proposal id */
  id: string;
  kind: "decision-point" | "proposal";
  role: string;
  title: string;
  options: { id: string; label: string }[];
  state: CardState;
  chosen: string | null;
  issued_ts: number;
}

export interface ConsoleState {
  role: Role;
  showAll: boolean;
  simNow: number;
  connection: "connecting" | "live" | "closed" | "error";
  runFinished: boolean;
  feed: EventLine[];
  latestReport: EventLine | null;
  cards: Map<string, Card>;
  processes: ProcessInstances;
  inventory: InventoryLevels;
  reservations: Record<string, ReservationView>;
  eventsSeen: number;
  ratePerMin: number;
}

export const FEED_LIMIT = 200;

export function initialState(role: Role): ConsoleState {
  return {
    role,
    showAll: false,
    simNow: 0,
    connection: "connecting",
    runFinished: false,
    feed: [],
    latestReport: null,
    cards: new Map(),
    processes: {},
    inventory: {},
    reservations: {},
    eventsSeen: 0,
    ratePerMin: 0,
  };
}

function inFeedScope(state: ConsoleState, event: EventLine): boolean {
  if (state.showAll) return true;
  return feedEtypesFor(state.role).includes(event.etype);
}

/** Feed stays ordered by (ts, seq) even if batches interleave. */
function insertOrdered(feed: EventLine[], event: EventLine): void {
  let i = feed.length;
  while (i > 0 && (feed[i - 1].ts > event.ts || (feed[i - 1].ts === event.ts && feed[i - 1].seq > event.seq))) {
    i -= 1;
  }
  feed.splice(i, 0, event);
  if (feed.length > FEED_LIMIT) feed.splice(0, feed.length - FEED_LIMIT);
}

/** Reduce one streamed event into the state. */
export function applyEvent(state: ConsoleState, event: EventLine): void {
  state.eventsSeen += 1;
  state.simNow = Math.max(state.simNow, event.ts);
  if (event.etype === "Report" && event.attrs.kind === "periodic") {
    state.latestReport = event;
  }
  if (event.etype === "DecisionPointIssued") {
    const id = String(event.attrs.point);
    if (!state.cards.has(id)) {
      const options = String(event.attrs.options).split(",");
      const labels = String(event.attrs.labels ?? "").split("|");
      state.cards.set(id, {
        id,
        kind: "decision-point",
        role: String(event.attrs.role),
        title: String(event.attrs.prompt || id),
        options: options.map((o, i) => ({ id: o, label: labels[i] ?? o })),
        state: "open",
        chosen: null,
        issued_ts: event.ts,
      });
    }
  }
  if (event.etype === "AdaptationProposalEvent") {
    const id = String(event.attrs.proposal);
    if (!state.cards.has(id)) {
      state.cards.set(id, {
        id,
        kind: "proposal",
        role: String(event.attrs.role),
        title: `${event.attrs.gap_kind} gap on ${event.attrs.subject}: expected ${event.attrs.expected}, actual ${event.attrs.actual}`,
        options: String(event.attrs.alternatives).split(",").map((o) => ({ id: o, label: o.replace(/-/g, " ") })),
        state: "open",
        chosen: null,
        issued_ts: event.ts,
      });
    }
  }
  if (event.etype === "DecisionChoice") {
    const target = String(event.attrs.point ?? event.attrs.proposal ?? "");
    const card = state.cards.get(target);
    if (card) {
      card.state = "chosen";
      card.chosen = String(event.attrs.option);
    }
  }
  if (inFeedScope(state, event)) {
    insertOrdered(state.feed, event);
  }
}

/** Reconcile with polled snapshots (cards survive reconnects this way). */
export function applyDecisionPoints(state: ConsoleState, points: DecisionPoint[]): void {
  for (const p of points) {
    const existing = state.cards.get(p.point);
    if (existing) {
      if (p.decided && existing.state !== "chosen") {
        existing.state = "chosen";
        existing.chosen = p.chosen;
      }
      continue;
    }
    state.cards.set(p.point, {
      id: p.point,
      kind: "decision-point",
      role: p.role,
      title: p.prompt || p.point,
      options: p.options,
      state: p.decided ? "chosen" : "open",
      chosen: p.chosen,
      issued_ts: p.issued_ts,
    });
  }
}

export function applyProposals(state: ConsoleState, proposals: Proposal[]): void {
  for (const p of proposals) {
    const existing = state.cards.get(p.proposal);
    if (existing) {
      if (p.state !== "open" && existing.state !== "chosen") {
        existing.state = "chosen";
        existing.chosen = p.chosen;
      }
      continue;
    }
    state.cards.set(p.proposal, {
      id: p.proposal,
      kind: "proposal",
      role: p.role,
      title: `${p.gap_kind} gap on ${p.subject}: expected ${p.expected}, actual ${p.actual}`,
      options: p.alternatives,
      state: p.state === "open" ? "open" : "chosen",
      chosen: p.chosen,
      issued_ts: p.detected_ts,
    });
  }
}

export function applyProcesses(state: ConsoleState, instances: ProcessInstances): void {
  state.processes = instances;
}

export function applyInventory(state: ConsoleState, inventory: InventoryLevels, reservations: Record<string, ReservationView>): void {
  state.inventory = inventory;
  state.reservations = reservations;
}

/** Cards the current role may act on, open first, then by issue time. */
export function visibleCards(state: ConsoleState): Card[] {
  const mine = [...state.cards.values()].filter((c) => state.showAll || actsFor(state.role, c.role));
  return mine.sort((a, b) =>
    a.state === b.state ? a.issued_ts - b.issued_ts : a.state === "open" ? -1 : 1,
  );
}

export function openCardCount(state: ConsoleState): number {
  return visibleCards(state).filter((c) => c.state === "open").length;
}

/** Mark a card as posting; returns false when a post is already in
 * flight or the card is closed (the double-click guard). */
export function beginPost(state: ConsoleState, cardId: string): boolean {
  const card = state.cards.get(cardId);
  if (!card || card.state !== "open") return false;
  card.state = "posting";
  return true;
}

export function finishPost(state: ConsoleState, cardId: string, outcome: "chosen" | "stale" | "open", chosen?: string): void {
  const card = state.cards.get(cardId);
  if (!card) return;
  if (outcome === "chosen") {
    card.state = "chosen";
    card.chosen = chosen ?? card.chosen;
  } else {
    card.state = outcome;
  }
}

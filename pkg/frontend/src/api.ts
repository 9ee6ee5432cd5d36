/** Gateway client: fetch + WebSocket, both injectable for node tests and
 * headless sessions. */

import type {
  ChoiceAck,
  DecisionPoint,
  EventLine,
  InventoryLevels,
  Pattern,
  ProcessInstances,
  Proposal,
  ReservationView,
} from "./types.js";

export class GatewayError extends Error {
  constructor(
    message: string,
    public status: number,
  ) {
    super(message);
  }
}

export interface StreamHandle {
  close(): void;
}

type FetchLike = (url: string, init?: Record<string, unknown>) => Promise<{
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
  text(): Promise<string>;
}>;

interface WebSocketLike {
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev: unknown) => void) | null;
  onerror: ((ev: unknown) => void) | null;
  close(): void;
}

type WebSocketCtor = new (url: string) => WebSocketLike;

export class GatewayClient {
  constructor(
    private base: string,
    private fetchImpl: FetchLike = globalThis.fetch as unknown as FetchLike,
    private wsCtor: WebSocketCtor = (globalThis as Record<string, unknown>).WebSocket as WebSocketCtor,
  ) {
    this.base = base.replace(/\/$/, "");
  }

  private async get<T>(path: string): Promise<T> {
    const res = await this.fetchImpl(`${this.base}${path}`);
    if (!res.ok) throw new GatewayError(await res.text(), res.status);
    return (await res.json()) as T;
  }

  getDecisionPoints(): Promise<{ decision_points: DecisionPoint[]; paused_for: string[] }> {
    return this.get("/decision-points");
  }

  getProposals(): Promise<{ proposals: Proposal[] }> {
    return this.get("/proposals");
  }

  getProcesses(): Promise<{ sim_now: number; instances: ProcessInstances }> {
    return this.get("/state/processes");
  }

  getInventory(): Promise<{
    sim_now: number;
    inventory: InventoryLevels;
    reservations: Record<string, ReservationView>;
  }> {
    return this.get("/state/inventory");
  }

  getMetrics(): Promise<Record<string, unknown>> {
    return this.get("/metrics");
  }

  async getHistory(params: { from?: number; to?: number; etype?: string[] }): Promise<EventLine[]> {
    const q = new URLSearchParams();
    if (params.from !== undefined) q.set("from", String(params.from));
    if (params.to !== undefined) q.set("to", String(params.to));
    for (const e of params.etype ?? []) q.append("etype", e);
    const res = await this.fetchImpl(`${this.base}/history?${q}`);
    if (!res.ok) throw new GatewayError(await res.text(), res.status);
    const text = await res.text();
    return text
      .split("\n")
      .filter((l) => l.trim())
      .map((l) => JSON.parse(l) as EventLine);
  }

  async postChoice(target: string, option: string, chooser: string): Promise<ChoiceAck> {
    const res = await this.fetchImpl(`${this.base}/choices`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ target, option, chooser }),
    });
    if (!res.ok) {
      const body = await res.text();
      throw new GatewayError(body, res.status);
    }
    return (await res.json()) as ChoiceAck;
  }

  /** Live event stream; onEvent receives parsed lines, onControl the
   * end-of-run marker, onClose any disconnect. */
  stream(
    pattern: Pattern,
    onEvent: (e: EventLine) => void,
    onControl?: (c: string) => void,
    onClose?: () => void,
  ): StreamHandle {
    const wsBase = this.base.replace(/^http/, "ws");
    const encoded = encodeURIComponent(JSON.stringify(pattern));
    const ws = new this.wsCtor(`${wsBase}/stream?pattern=${encoded}`);
    ws.onmessage = (ev) => {
      // A frame may carry several newline-separated event lines.
      for (const line of String(ev.data).split("\n")) {
        if (!line) continue;
        const doc = JSON.parse(line);
        if (doc.control) onControl?.(String(doc.control));
        else onEvent(doc as EventLine);
      }
    };
    ws.onclose = () => onClose?.();
    ws.onerror = () => onClose?.();
    return { close: () => ws.close() };
  }
}

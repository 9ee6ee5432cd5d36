/** A live console session: one role, one stream, reconciled snapshots.
 *
 * DOM-free; the browser view subscribes to `onChange`, the end-to-end
 * test drives the same class headlessly over node fetch + ws.
 */

import { GatewayClient, GatewayError, type StreamHandle } from "./api.js";
import { applyDecisionPoints, applyEvent, applyInventory, applyProcesses, applyProposals, beginPost, finishPost, initialState, type ConsoleState } from "./state.js";
import type { Role } from "./roles.js";

export class ConsoleSession {
  readonly state: ConsoleState;
  readonly sessionId: string;
  private stream: StreamHandle | null = null;
  private pollTimer: ReturnType<typeof setInterval> | null = null;
  private listeners: (() => void)[] = [];

  constructor(
    private client: GatewayClient,
    role: Role,
    sessionId?: string,
  ) {
    this.state = initialState(role);
    this.sessionId = sessionId ?? `console:${role}:${Math.random().toString(36).slice(2, 8)}`;
  }

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const l of this.listeners) l();
  }

  /** Subscribe to the firehose and start snapshot polling. */
  async connect(pollMs = 500): Promise<void> {
    try {
      await this.refreshSnapshots();
      this.state.connection = "live";
    } catch {
      this.state.connection = "error";
      this.notify();
      throw new Error("gateway unreachable");
    }
    this.stream = this.client.stream(
      {},
      (event) => {
        applyEvent(this.state, event);
        this.notify();
      },
      (control) => {
        if (control === "run-finished") {
          this.state.runFinished = true;
          this.state.connection = "closed";
          this.notify();
        }
      },
      () => {
        if (!this.state.runFinished) this.state.connection = "closed";
        this.notify();
      },
    );
    this.pollTimer = setInterval(() => {
      this.refreshSnapshots().catch(() => undefined);
    }, pollMs);
    this.notify();
  }

  async refreshSnapshots(): Promise<void> {
    const [points, proposals, processes, inventory] = await Promise.all([
      this.client.getDecisionPoints(),
      this.client.getProposals(),
      this.client.getProcesses(),
      this.client.getInventory(),
    ]);
    applyDecisionPoints(this.state, points.decision_points);
    applyProposals(this.state, proposals.proposals);
    applyProcesses(this.state, processes.instances);
    applyInventory(this.state, inventory.inventory, inventory.reservations);
    this.state.simNow = Math.max(this.state.simNow, processes.sim_now);
    this.notify();
  }

  /** Post a card choice; duplicate submissions are swallowed client-side
   * and an AlreadyDecided answer flips the card to a stale notice. */
  async submitChoice(cardId: string, optionId: string): Promise<boolean> {
    if (!beginPost(this.state, cardId)) return false;
    this.notify();
    try {
      const ack = await this.client.postChoice(cardId, optionId, this.sessionId);
      finishPost(this.state, cardId, "chosen", ack.option);
      this.notify();
      return true;
    } catch (err) {
      if (err instanceof GatewayError && err.status === 409) {
        finishPost(this.state, cardId, "stale");
      } else {
        finishPost(this.state, cardId, "open"); // retryable
      }
      this.notify();
      return false;
    }
  }

  close(): void {
    this.stream?.close();
    if (this.pollTimer) clearInterval(this.pollTimer);
  }
}

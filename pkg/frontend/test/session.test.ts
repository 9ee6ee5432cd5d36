import { describe, expect, it, vi } from "vitest";
import { GatewayClient } from "../src/api.js";
import { ConsoleSession } from "../src/session.js";
import { applyEvent } from "../src/state.js";

/** fetch stub: counts choice posts, serves empty snapshots. */
function stubFetch(choiceResponses: Array<{ status: number; body: unknown }>) {
  const posts: unknown[] = [];
  const impl = vi.fn(async (url: string, init?: Record<string, unknown>) => {
    if (url.includes("/choices")) {
      posts.push(JSON.parse(String(init?.body)));
      const next = choiceResponses.shift() ?? { status: 503, body: { error: "exhausted" } };
      return {
        ok: next.status < 400,
        status: next.status,
        json: async () => next.body,
        text: async () => JSON.stringify(next.body),
      };
    }
    const empty: Record<string, unknown> = {
      "/decision-points": { decision_points: [], paused_for: [] },
      "/proposals": { proposals: [] },
      "/state/processes": { sim_now: 0, instances: {} },
      "/state/inventory": { sim_now: 0, inventory: {}, reservations: {} },
    };
    const key = Object.keys(empty).find((k) => url.includes(k)) ?? "/proposals";
    return { ok: true, status: 200, json: async () => empty[key], text: async () => "{}" };
  });
  return { impl, posts };
}

class FakeWs {
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: ((ev: unknown) => void) | null = null;
  onerror: ((ev: unknown) => void) | null = null;
  close(): void {}
}

function sessionWith(choiceResponses: Array<{ status: number; body: unknown }>) {
  const { impl, posts } = stubFetch(choiceResponses);
  const client = new GatewayClient("http://gw", impl as never, FakeWs as never);
  const session = new ConsoleSession(client, "RepresentativeNationalAuthority", "console:test:1");
  applyEvent(session.state, {
    seq: 1,
    id: "e-1",
    etype: "DecisionPointIssued",
    source: "scenario",
    ts: 1200000,
    attrs: { point: "confine", role: "RepresentativeNationalAuthority", prompt: "?", options: "go,hold", labels: "Go|Hold" },
  });
  return { session, posts };
}

describe("choice submission", () => {
  it("posts once and marks the card chosen on ack", async () => {
    const { session, posts } = sessionWith([{ status: 200, body: { ok: true, seq: 7, target: "confine", option: "go" } }]);
    const ok = await session.submitChoice("confine", "go");
    expect(ok).toBe(true);
    expect(posts).toHaveLength(1);
    expect(posts[0]).toMatchObject({ target: "confine", option: "go", chooser: "console:test:1" });
    expect(session.state.cards.get("confine")?.state).toBe("chosen");
  });

  it("double click produces exactly one POST", async () => {
    const { session, posts } = sessionWith([{ status: 200, body: { ok: true, seq: 7, target: "confine", option: "go" } }]);
    const [first, second] = await Promise.all([
      session.submitChoice("confine", "go"),
      session.submitChoice("confine", "go"),
    ]);
    expect(posts).toHaveLength(1);
    expect([first, second].filter(Boolean)).toHaveLength(1);
    // And clicking after the ack changes nothing either.
    await session.submitChoice("confine", "go");
    expect(posts).toHaveLength(1);
  });

  it("renders a stale notice on AlreadyDecided", async () => {
    const { session, posts } = sessionWith([{ status: 409, body: { error: "confine already decided" } }]);
    const ok = await session.submitChoice("confine", "go");
    expect(ok).toBe(false);
    expect(posts).toHaveLength(1);
    expect(session.state.cards.get("confine")?.state).toBe("stale");
  });

  it("reopens the card on transient errors so the operator can retry", async () => {
    const { session } = sessionWith([{ status: 503, body: { error: "driver busy" } }]);
    await session.submitChoice("confine", "go");
    expect(session.state.cards.get("confine")?.state).toBe("open");
  });
});

describe("connect", () => {
  it("flags gateway-down as an error state without crashing", async () => {
    const failing = vi.fn(async () => {
      throw new Error("ECONNREFUSED");
    });
    const client = new GatewayClient("http://down", failing as never, FakeWs as never);
    const session = new ConsoleSession(client, "RepresentativeNationalAuthority");
    await expect(session.connect()).rejects.toThrow("gateway unreachable");
    expect(session.state.connection).toBe("error");
  });
});

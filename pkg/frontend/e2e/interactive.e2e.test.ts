/**
 * Interactive end-to-end: gateway serving the nuclear scenario, two console
 * sessions steering periods 2-3 (confinement activation plus both
 * adaptation alternatives).  The resulting milestone set must equal the
 * scripted run's, and the recorded DecisionChoice events must be
 * attributed to the console sessions.
 *
 * Run with `npm run e2e` (needs the python package installed).
 */

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import WebSocket from "ws";

import { GatewayClient } from "../src/api.js";
import { ConsoleSession } from "../src/session.js";
import { visibleCards } from "../src/state.js";

const PY = process.env.CRISISCLOUD_PYTHON ?? "python3";
const PORT = 18000 + Math.floor(Math.random() * 1000);
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess;
let workDir: string;

type MilestoneRow = { name: string; expected_ts: number; actual_ts: number | null; ok: boolean };

function milestoneSet(rows: MilestoneRow[]): string[] {
  return rows.map((m) => `${m.name}@${m.expected_ts}=${m.actual_ts}:${m.ok}`).sort();
}

async function waitFor<T>(probe: () => Promise<T | undefined>, what: string, timeoutMs = 60000): Promise<T> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    try {
      const result = await probe();
      if (result !== undefined) return result;
    } catch {
      // gateway not up yet / transient; keep polling
    }
    if (Date.now() > deadline) throw new Error(`timed out waiting for ${what}`);
    await new Promise((r) => setTimeout(r, 150));
  }
}

beforeAll(() => {
  workDir = mkdtempSync(join(tmpdir(), "crisis-e2e-"));
  // Reference: scripted run of the same scenario.
  const scripted = spawnSync(
    PY,
    ["-m", "crisiscloud.cli", "run", "--scenario", "nuclear", "--decisions", "scripted",
     "--speed", "max", "--metrics", join(workDir, "scripted-metrics.json")],
    { encoding: "utf-8" },
  );
  if (scripted.status !== 0) throw new Error(`scripted reference run failed:\n${scripted.stderr}`);
  // Live gateway in interactive mode.
  server = spawn(
    PY,
    ["-m", "crisiscloud.cli", "serve", "--scenario", "nuclear", "--decisions", "interactive",
     "--speed", "max", "--port", String(PORT), "--log", join(workDir, "interactive.log")],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
});

afterAll(() => {
  server?.kill("SIGTERM");
});

describe("operator-driven periods 2-3", () => {
  it("matches the scripted milestone set with console-attributed choices", async () => {
    const rna = new ConsoleSession(
      new GatewayClient(BASE, undefined, WebSocket as never),
      "RepresentativeNationalAuthority",
      "console:rna:e2e",
    );
    const office = new ConsoleSession(
      new GatewayClient(BASE, undefined, WebSocket as never),
      "OfficeOfInfrastructureRepresentative",
      "console:office:e2e",
    );
    await waitFor(async () => {
      await rna.connect(250);
      return true;
    }, "gateway to come up");
    await office.connect(250);

    // Period 2: the confinement suggestion pauses the clock at t0+20:00
    // until the national-authority operator activates the plan.
    const confinement = await waitFor(async () => {
      await rna.refreshSnapshots();
      return visibleCards(rna.state).find((c) => c.id === "activate-confinement" && c.state === "open");
    }, "confinement decision point");
    expect(confinement.options.map((o) => o.id)).toContain("confine");
    expect(await rna.submitChoice("activate-confinement", "confine")).toBe(true);

    // Period 3, first hazard: the vehicle burst surfaces as a resource-gap
    // proposal at t0+60:00 on the office console.
    const resourceGap = await waitFor(async () => {
      await office.refreshSnapshots();
      return visibleCards(office.state).find((c) => c.kind === "proposal" && c.title.startsWith("resource") && c.state === "open");
    }, "resource-gap proposal");
    expect(resourceGap.options.map((o) => o.id)).toEqual(["ask-new-resource", "dispatch-remaining"]);
    expect(await office.submitChoice(resourceGap.id, "dispatch-remaining")).toBe(true);

    // Second hazard: the overrun surfaces as a status-gap proposal at t0+80:00.
    const statusGap = await waitFor(async () => {
      await office.refreshSnapshots();
      return visibleCards(office.state).find((c) => c.kind === "proposal" && c.title.startsWith("status") && c.state === "open");
    }, "status-gap proposal");
    expect(statusGap.options.map((o) => o.id)).toEqual(["require-immediate-report", "send-someone", "wait"]);
    expect(await office.submitChoice(statusGap.id, "require-immediate-report")).toBe(true);

    // Run to completion and compare milestone tables.
    const gatewayMetrics = await waitFor(async () => {
      const m = await rna["client"].getMetrics();
      return m.finished ? m : undefined;
    }, "run to finish");
    expect(gatewayMetrics.all_ok).toBe(true);
    const scriptedMetrics = JSON.parse(readFileSync(join(workDir, "scripted-metrics.json"), "utf-8"));
    expect(milestoneSet(gatewayMetrics.milestones as MilestoneRow[])).toEqual(
      milestoneSet(scriptedMetrics.milestones as MilestoneRow[]),
    );

    // The recorded human-loop exchange carries the console session ids.
    const choices = await rna["client"].getHistory({ etype: ["DecisionChoice"] });
    const byTarget = new Map(choices.map((c) => [String(c.attrs.point ?? c.attrs.proposal), c]));
    expect(byTarget.get("activate-confinement")?.attrs.chooser).toBe("console:rna:e2e");
    expect(byTarget.get(resourceGap.id)?.attrs.chooser).toBe("console:office:e2e");
    expect(byTarget.get(statusGap.id)?.attrs.chooser).toBe("console:office:e2e");
    // Scripted period-1 decisions stay script-attributed even interactively.
    expect(byTarget.get("extend-perimeter-30km")?.attrs.chooser).toBe("RepresentativeNationalAuthority");

    // The console state reconciled everything it displayed from events
    // (the ws end-of-run control and the last snapshot poll are async).
    await waitFor(async () => (rna.state.runFinished ? true : undefined), "stream end-of-run control");
    expect(rna.state.cards.get("activate-confinement")?.state).toBe("chosen");
    await waitFor(async () => {
      await office.refreshSnapshots();
      return office.state.inventory.vehicle?.total === 3 ? true : undefined; // one vehicle lost
    }, "final inventory snapshot");

    rna.close();
    office.close();
  });
});

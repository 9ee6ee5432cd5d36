/** Wire types mirroring the gateway's canonical payloads. */

export type Scalar = string | number | boolean;

/** One canonical event line, parsed. */
export interface EventLine {
  seq: number;
  id: string;
  etype: string;
  source: string;
  ts: number;
  attrs: Record<string, Scalar>;
  geo?: [number, number];
}

export interface Alternative {
  id: string;
  label: string;
}

export interface Proposal {
  proposal: string;
  state: "open" | "chosen" | "expired";
  gap_kind: "resource" | "status";
  subject: string;
  expected: Scalar;
  actual: Scalar;
  detected_ts: number;
  role: string;
  alternatives: Alternative[];
  chosen: string | null;
}

export interface DecisionPoint {
  point: string;
  role: string;
  prompt: string;
  issued_ts: number;
  options: Alternative[];
  decided: boolean;
  chosen: string | null;
}

export interface ActivityState {
  lane: string;
  status: "waiting" | "ongoing" | "finished";
  started_ts: number | null;
  intended_finish_ts: number | null;
  finished_ts: number | null;
}

export interface ProcessInstances {
  [instanceId: string]: {
    process_id: string;
    activities: Record<string, ActivityState>;
  };
}

export interface InventoryLevels {
  [kind: string]: { total: number; available: number; committed: number };
}

export interface ReservationView {
  kind: string;
  requested: number;
  committed: number;
  holder: string;
  confirmed_for_ts: number;
  active: boolean;
}

export interface Pattern {
  etypes?: string[];
  predicates?: [string, string, Scalar][];
  geo?: { lat: number; lon: number; radius_km: number };
  sources?: string[];
}

export interface ChoiceAck {
  ok: boolean;
  seq: number;
  target: string;
  option: string;
}

// Wire protocol types for the twin API (schema v1) plus delta application.
// The client never computes metrics: usage, tier, scale, and GPU intensity
// all arrive precomputed on these documents.

export const WIRE_VERSION = 1;

export interface WireNode {
  id: string;
  rack: string;
  cpu: number;
  mem: number;
  net_rx: number;
  net_tx: number;
  /** per-GPU display intensity in [0, 1]: 0 = black/idle, 1 = full red */
  gpus: number[];
}

export type TierName = "normal" | "elevated" | "critical";

export interface WireUser {
  id: string;
  name: string;
  rank: string;
  nodes: number;
  files: number;
  jobs: number;
  alerts: number;
  usage: number;
  tier: TierName;
  scale: number;
}

export interface WireJob {
  id: string;
  user: string;
  nodes: string[];
  files: number;
}

export interface WireSnapshot {
  v: number;
  ts: number;
  nodes: WireNode[];
  users: WireUser[];
  jobs: WireJob[];
}

export interface WireDelta {
  v: number;
  ts: number;
  nodes: WireNode[];
  users: WireUser[];
  jobs: WireJob[];
  removed: { nodes: string[]; users: string[]; jobs: string[] };
}

export type StreamMessage =
  | ({ kind: "snapshot" } & WireSnapshot)
  | ({ kind: "delta" } & WireDelta);

export interface HistoryStatus {
  state: "idle" | "loading" | "ready" | "failed";
  loaded: number;
  total: number;
  reason?: string;
}

export class SchemaVersionError extends Error {
  constructor(got: number) {
    super(`wire schema version ${got} does not match supported ${WIRE_VERSION}`);
    this.name = "SchemaVersionError";
  }
}

export function checkVersion(doc: { v: number }): void {
  if (doc.v !== WIRE_VERSION) throw new SchemaVersionError(doc.v);
}

/** Apply a delta to the previous snapshot, producing the next full snapshot. */
export function applyDelta(prev: WireSnapshot, delta: WireDelta): WireSnapshot {
  const merge = <T extends { id: string }>(before: T[], changes: T[], removed: string[]): T[] => {
    const byId = new Map(before.map((e) => [e.id, e]));
    for (const e of changes) byId.set(e.id, e);
    for (const id of removed) byId.delete(id);
    return [...byId.keys()].sort().map((id) => byId.get(id)!);
  };
  return {
    v: delta.v,
    ts: delta.ts,
    nodes: merge(prev.nodes, delta.nodes, delta.removed.nodes),
    users: merge(prev.users, delta.users, delta.removed.users),
    jobs: merge(prev.jobs, delta.jobs, delta.removed.jobs),
  };
}

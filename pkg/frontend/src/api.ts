// Thin client for the twin's HTTP + WebSocket API. All scene state flows
// through here; the console has no other data source.

import type { HistoryStatus, StreamMessage, WireSnapshot } from "./protocol";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

export class TwinApi {
  constructor(
    private base: string = "",
    private fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const res = await this.fetchImpl(this.base + path);
    if (!res.ok) throw new ApiError(res.status, `${path}: HTTP ${res.status}`);
    return (await res.json()) as T;
  }

  private async postJson<T>(path: string, body?: unknown): Promise<T> {
    const res = await this.fetchImpl(this.base + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!res.ok) throw new ApiError(res.status, `${path}: HTTP ${res.status}`);
    return (await res.json()) as T;
  }

  cluster(): Promise<WireSnapshot> {
    return this.getJson("/api/v1/cluster");
  }

  async correlateUser(id: string): Promise<string[]> {
    const doc = await this.getJson<{ nodes: string[] }>(
      `/api/v1/correlate/user/${encodeURIComponent(id)}`,
    );
    return doc.nodes;
  }

  async correlateNode(id: string): Promise<string[]> {
    const doc = await this.getJson<{ users: string[] }>(
      `/api/v1/correlate/node/${encodeURIComponent(id)}`,
    );
    return doc.users;
  }

  historyLoad(fromTs: number, toTs: number): Promise<{ job: number; state: string }> {
    return this.postJson("/api/v1/history/load", { from_ts: fromTs, to_ts: toTs });
  }

  historyStatus(): Promise<HistoryStatus> {
    return this.getJson("/api/v1/history/status");
  }

  historySegment(index: number): Promise<WireSnapshot> {
    return this.getJson(`/api/v1/history/segments/${index}`);
  }

  historyExit(): Promise<{ state: string }> {
    return this.postJson("/api/v1/history/exit");
  }

  /** Open the live stream; messages arrive in tick order per subscriber. */
  openLiveStream(handlers: {
    onMessage: (msg: StreamMessage) => void;
    onClose?: (reason: string) => void;
  }): WebSocket {
    const proto = location.protocol === "https:" ? "wss:" : "ws:";
    const ws = new WebSocket(`${proto}//${location.host}${this.base}/api/v1/live`);
    ws.onmessage = (ev) => handlers.onMessage(JSON.parse(ev.data) as StreamMessage);
    ws.onclose = (ev) => handlers.onClose?.(ev.reason || `closed (${ev.code})`);
    return ws;
  }
}

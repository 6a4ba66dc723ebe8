// History mode state machine. Loading happens server-side; the client
// only polls progress, so the live view stays interactive throughout.

import type { HistoryStatus, WireSnapshot } from "./protocol";

export interface HistoryApi {
  historyLoad(fromTs: number, toTs: number): Promise<unknown>;
  historyStatus(): Promise<HistoryStatus>;
  historySegment(index: number): Promise<WireSnapshot>;
  historyExit(): Promise<unknown>;
}

export type ViewMode =
  | { kind: "live" }
  | { kind: "loading"; loaded: number; total: number }
  | { kind: "replay"; index: number; count: number }
  | { kind: "failed"; reason: string };

export interface HistoryEvents {
  onMode: (mode: ViewMode) => void;
  onSegment: (index: number, snapshot: WireSnapshot) => void;
}

export class HistoryController {
  private mode_: ViewMode = { kind: "live" };
  private count = 0;
  private polling = false;

  constructor(
    private api: HistoryApi,
    private events: HistoryEvents,
    private pollIntervalMs = 250,
  ) {}

  get mode(): ViewMode {
    return this.mode_;
  }

  private setMode(mode: ViewMode): void {
    this.mode_ = mode;
    this.events.onMode(mode);
  }

  /** Kick off a server-side bulk load and poll until ready or failed. */
  async enter(fromTs: number, toTs: number): Promise<void> {
    try {
      await this.api.historyLoad(fromTs, toTs);
    } catch (err) {
      this.setMode({ kind: "failed", reason: String(err) });
      return;
    }
    this.setMode({ kind: "loading", loaded: 0, total: 0 });
    this.polling = true;
    while (this.polling) {
      const status = await this.api.historyStatus();
      if (status.state === "ready") {
        this.polling = false;
        this.count = status.total;
        if (this.count > 0) {
          await this.scrub(0);
        } else {
          this.setMode({ kind: "failed", reason: "no segments in range" });
        }
        return;
      }
      if (status.state === "failed") {
        this.polling = false;
        this.setMode({ kind: "failed", reason: status.reason ?? "load failed" });
        return;
      }
      this.setMode({ kind: "loading", loaded: status.loaded, total: status.total });
      await sleep(this.pollIntervalMs);
    }
  }

  /** Replay-only: fetch segment i and render it through the usual path. */
  async scrub(index: number): Promise<void> {
    if (index < 0 || index >= this.count) return;
    const snapshot = await this.api.historySegment(index);
    this.setMode({ kind: "replay", index, count: this.count });
    this.events.onSegment(index, snapshot);
  }

  async exit(): Promise<void> {
    this.polling = false;
    this.count = 0;
    try {
      await this.api.historyExit();
    } finally {
      this.setMode({ kind: "live" });
    }
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

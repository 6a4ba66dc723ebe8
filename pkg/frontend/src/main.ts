// Console boot: wire the live stream, picking, detail panel, and history
// controls together. All state mutation happens on the UI event loop via
// async callbacks; the heavy lifting (bulk loads) stays server-side.

import { TwinApi } from "./api";
import { HistoryController, type ViewMode } from "./history";
import { applyDelta, SchemaVersionError, type WireSnapshot } from "./protocol";
import { SceneModel, SelectionController, userDetailRows } from "./scene";
import { TwinView } from "./view3d";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const canvas = $<HTMLCanvasElement>("view");
const modeEl = $<HTMLSpanElement>("mode");
const clockEl = $<HTMLSpanElement>("clock");
const bannerEl = $<HTMLDivElement>("banner");
const panelEl = $<HTMLDivElement>("panel");
const progressEl = $<HTMLSpanElement>("progress");
const scrubEl = $<HTMLInputElement>("scrub");
const enterBtn = $<HTMLButtonElement>("history-enter");
const exitBtn = $<HTMLButtonElement>("history-exit");

const api = new TwinApi();
const scene = new SceneModel();
const selection = new SelectionController(api, scene);
const view = new TwinView(canvas, scene);

let liveDoc: WireSnapshot | null = null;
let mode: ViewMode = { kind: "live" };

function showBanner(message: string): void {
  bannerEl.textContent = message;
  bannerEl.style.display = "block";
}

function renderClock(): void {
  clockEl.textContent = scene.ts ? new Date(scene.ts * 1000).toISOString() : "-";
}

function renderSnapshotSafe(doc: WireSnapshot): void {
  try {
    scene.reconcile(doc);
  } catch (err) {
    if (err instanceof SchemaVersionError) {
      showBanner(`${err.message} - reload the console`);
      return;
    }
    throw err;
  }
  renderClock();
  renderPanel();
}

function renderPanel(): void {
  const sel = scene.selection;
  if (!sel) {
    panelEl.innerHTML = "<em>Click a node or a user avatar.</em>";
    return;
  }
  if (sel.kind === "user") {
    const entity = scene.users.get(sel.id);
    if (!entity) return;
    const rows = userDetailRows(entity.wire)
      .map(([k, v]) => `<tr><td>${k}</td><td>${v}</td></tr>`)
      .join("");
    panelEl.innerHTML =
      `<h3 class="tier-${entity.wire.tier}">${entity.wire.name}</h3>` +
      `<table>${rows}</table>` +
      `<p>${scene.highlightedNodes.size} node(s) highlighted</p>`;
  } else {
    const entity = scene.nodes.get(sel.id);
    if (!entity) return;
    const n = entity.wire;
    panelEl.innerHTML =
      `<h3>${n.id}</h3>` +
      `<table>` +
      `<tr><td>Rack</td><td>${n.rack}</td></tr>` +
      `<tr><td>CPU</td><td>${n.cpu.toFixed(1)}%</td></tr>` +
      `<tr><td>Memory</td><td>${n.mem.toFixed(1)}%</td></tr>` +
      `<tr><td>Net rx/tx</td><td>${n.net_rx.toFixed(1)} / ${n.net_tx.toFixed(1)} Mbps</td></tr>` +
      `<tr><td>GPUs</td><td>${n.gpus.length}</td></tr>` +
      `</table>` +
      `<p>${scene.highlightedUsers.size} user(s) highlighted</p>`;
  }
}

function renderMode(m: ViewMode): void {
  mode = m;
  switch (m.kind) {
    case "live":
      modeEl.textContent = "LIVE";
      progressEl.textContent = "";
      scrubEl.disabled = true;
      exitBtn.disabled = true;
      enterBtn.disabled = false;
      if (liveDoc) renderSnapshotSafe(liveDoc);
      break;
    case "loading": {
      const pct = m.total > 0 ? Math.round((100 * m.loaded) / m.total) : 0;
      modeEl.textContent = "HISTORY (loading)";
      progressEl.textContent = `loading ${m.loaded}/${m.total} files (${pct}%)`;
      scrubEl.disabled = true;
      exitBtn.disabled = false;
      enterBtn.disabled = true;
      break;
    }
    case "replay":
      modeEl.textContent = "HISTORY (replay)";
      progressEl.textContent = `segment ${m.index + 1}/${m.count}`;
      scrubEl.disabled = false;
      scrubEl.max = String(m.count - 1);
      scrubEl.value = String(m.index);
      exitBtn.disabled = false;
      enterBtn.disabled = true;
      break;
    case "failed":
      modeEl.textContent = "HISTORY (failed)";
      progressEl.textContent = `load failed: ${m.reason}`;
      scrubEl.disabled = true;
      exitBtn.disabled = false;
      enterBtn.disabled = false;
      break;
  }
}

const history = new HistoryController(api, {
  onMode: renderMode,
  onSegment: (_index, snapshot) => {
    scene.clearSelection();
    renderSnapshotSafe(snapshot);
  },
});

canvas.addEventListener("click", (ev) => {
  void selection.select(view.pick(ev.clientX, ev.clientY)).then(() => {
    view.sync(true);
    renderPanel();
  });
});

enterBtn.addEventListener("click", () => {
  void history.enter(0, Number.MAX_SAFE_INTEGER);
});

exitBtn.addEventListener("click", () => {
  scene.clearSelection();
  void history.exit();
});

scrubEl.addEventListener("input", () => {
  void history.scrub(Number(scrubEl.value));
});

api.openLiveStream({
  onMessage: (msg) => {
    if (msg.kind === "snapshot") {
      const { kind: _kind, ...doc } = msg;
      liveDoc = doc;
    } else if (liveDoc) {
      const { kind: _kind, ...delta } = msg;
      liveDoc = applyDelta(liveDoc, delta);
    }
    // history replay owns the scene while active; live keeps flowing
    if (mode.kind === "live" && liveDoc) renderSnapshotSafe(liveDoc);
  },
  onClose: (reason) => showBanner(`live stream closed: ${reason}`),
});

renderMode({ kind: "live" });
renderPanel();
view.start();

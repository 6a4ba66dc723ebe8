// Retained scene model: one entity per node_id / user_id, reconciled
// against each incoming snapshot by key (insert/update/remove, never
// append-blindly), so duplicate scene objects cannot exist no matter how
// many snapshots stream in. The 3D layer mirrors this model; everything
// here is plain data and runs headless in tests.

import type { WireJob, WireNode, WireSnapshot, WireUser } from "./protocol";
import { checkVersion } from "./protocol";

export interface Vec3 {
  x: number;
  y: number;
  z: number;
}

export interface NodeEntity {
  wire: WireNode;
  position: Vec3;
}

export interface UserEntity {
  wire: WireUser;
  position: Vec3;
}

export type Selection = { kind: "node" | "user"; id: string } | null;

// Layout: racks side by side on a grid, nodes stacked upward per rack,
// avatars in a row beside the racks.
const RACK_SPACING = 2.2;
const NODE_SPACING = 1.2;
const AVATAR_SPACING = 2.0;
const AVATAR_GAP = 3.0;

export class SceneModel {
  readonly nodes = new Map<string, NodeEntity>();
  readonly users = new Map<string, UserEntity>();
  readonly jobs = new Map<string, WireJob>();

  selection: Selection = null;
  highlightedNodes = new Set<string>();
  highlightedUsers = new Set<string>();

  /** bumps on every applied snapshot; lets the 3D layer cheaply detect staleness */
  generation = 0;
  ts = 0;

  reconcile(snapshot: WireSnapshot): void {
    checkVersion(snapshot);

    const racks: string[] = [];
    const rackIndex = new Map<string, number>();
    const slotInRack = new Map<string, number>();
    for (const n of snapshot.nodes) {
      if (!rackIndex.has(n.rack)) {
        rackIndex.set(n.rack, racks.length);
        racks.push(n.rack);
        slotInRack.set(n.rack, 0);
      }
    }

    const seenNodes = new Set<string>();
    for (const n of snapshot.nodes) {
      seenNodes.add(n.id);
      const slot = slotInRack.get(n.rack)!;
      slotInRack.set(n.rack, slot + 1);
      const position = {
        x: rackIndex.get(n.rack)! * RACK_SPACING,
        y: slot * NODE_SPACING,
        z: 0,
      };
      const existing = this.nodes.get(n.id);
      if (existing) {
        existing.wire = n;
        existing.position = position;
      } else {
        this.nodes.set(n.id, { wire: n, position });
      }
    }
    for (const id of [...this.nodes.keys()]) {
      if (!seenNodes.has(id)) this.nodes.delete(id);
    }

    const avatarBaseX = racks.length * RACK_SPACING + AVATAR_GAP;
    const seenUsers = new Set<string>();
    snapshot.users.forEach((u, i) => {
      seenUsers.add(u.id);
      const position = { x: avatarBaseX + i * AVATAR_SPACING, y: 0, z: 0 };
      const existing = this.users.get(u.id);
      if (existing) {
        existing.wire = u;
        existing.position = position;
      } else {
        this.users.set(u.id, { wire: u, position });
      }
    });
    for (const id of [...this.users.keys()]) {
      if (!seenUsers.has(id)) this.users.delete(id);
    }

    this.jobs.clear();
    for (const j of snapshot.jobs) this.jobs.set(j.id, j);

    // a selected entity that vanished from the wire clears the selection
    if (this.selection) {
      const { kind, id } = this.selection;
      const alive = kind === "node" ? this.nodes.has(id) : this.users.has(id);
      if (!alive) this.clearSelection();
    }

    this.ts = snapshot.ts;
    this.generation += 1;
  }

  setSelection(selection: Selection, highlighted: string[]): void {
    this.selection = selection;
    this.highlightedNodes.clear();
    this.highlightedUsers.clear();
    if (!selection) return;
    if (selection.kind === "user") {
      this.highlightedUsers.add(selection.id);
      for (const id of highlighted) this.highlightedNodes.add(id);
    } else {
      this.highlightedNodes.add(selection.id);
      for (const id of highlighted) this.highlightedUsers.add(id);
    }
  }

  clearSelection(): void {
    this.selection = null;
    this.highlightedNodes.clear();
    this.highlightedUsers.clear();
  }
}

export interface Correlator {
  correlateUser(id: string): Promise<string[]>;
  correlateNode(id: string): Promise<string[]>;
}

/**
 * Click handling: selecting an avatar highlights it plus exactly the
 * node set the correlate endpoint reports; selecting a node highlights
 * its user set; clicking empty space (null) deselects. A pick of an
 * entity that just vanished clears the selection instead of crashing.
 */
export class SelectionController {
  constructor(
    private api: Correlator,
    private scene: SceneModel,
  ) {}

  async select(target: Selection): Promise<void> {
    if (target === null) {
      this.scene.clearSelection();
      return;
    }
    if (target.kind === "user") {
      if (!this.scene.users.has(target.id)) {
        this.scene.clearSelection();
        return;
      }
      this.scene.setSelection(target, await this.api.correlateUser(target.id));
    } else {
      if (!this.scene.nodes.has(target.id)) {
        this.scene.clearSelection();
        return;
      }
      this.scene.setSelection(target, await this.api.correlateNode(target.id));
    }
  }
}

/** Fields shown in the user detail panel, in display order. */
export function userDetailRows(u: WireUser): Array<[string, string]> {
  return [
    ["Name", u.name],
    ["ID", u.id],
    ["Rank", u.rank],
    ["Nodes in use", String(u.nodes)],
    ["Files in use", String(u.files)],
    ["Jobs running", String(u.jobs)],
    ["Alerts", String(u.alerts)],
    ["Usage", u.usage.toFixed(1)],
  ];
}

// Presentation-only color maps. Inputs are wire fields; nothing here
// derives a metric.

import type { TierName } from "./protocol";

export const TIER_COLORS: Record<TierName, number> = {
  normal: 0x2ecc40, // green
  elevated: 0x00e5ff, // cyan
  critical: 0xff3b30, // red
};

/** Node body color from cpu load: cool blue through yellow to hot red. */
export function cpuColor(cpuPct: number): number {
  const t = Math.min(Math.max(cpuPct / 100, 0), 1);
  const r = Math.round(255 * Math.min(1, 2 * t));
  const g = Math.round(255 * Math.min(1, 2 - 2 * t) * 0.85);
  const b = Math.round(110 * (1 - t));
  return (r << 16) | (g << 8) | b;
}

/** GPU indicator: server-provided intensity in [0,1], black through red. */
export function gpuColor(intensity: number): number {
  const r = Math.round(255 * Math.min(Math.max(intensity, 0), 1));
  return r << 16;
}

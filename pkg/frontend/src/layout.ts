// Client-side layout. The wire model carries no coordinates; positions are
// computed here, and only manual drag overrides persist (localStorage).

import type { GsnProjection } from "./types.js";

export interface Point {
  x: number;
  y: number;
}

export interface GsnLayout {
  positions: Map<string, Point>;
  width: number;
  height: number;
}

const COLUMN_WIDTH = 180;
const ROW_HEIGHT = 96;
const MARGIN = 24;

// Layer each node by its longest path from a root (a node no edge targets),
// then pack layers left to right. Deterministic for a given projection.
export function layoutGsn(projection: GsnProjection): GsnLayout {
  const ids = projection.nodes.map((n) => n.id);
  const parents = new Map<string, string[]>();
  for (const id of ids) parents.set(id, []);
  for (const [, source, target] of projection.edges) {
    parents.get(target)?.push(source);
  }

  const depth = new Map<string, number>();
  const depthOf = (id: string, trail: Set<string>): number => {
    const known = depth.get(id);
    if (known !== undefined) return known;
    if (trail.has(id)) return 0; // cycle guard; the server flags cycles
    trail.add(id);
    const above = parents.get(id) ?? [];
    const d = above.length === 0 ? 0 : 1 + Math.max(...above.map((p) => depthOf(p, trail)));
    trail.delete(id);
    depth.set(id, d);
    return d;
  };
  for (const id of ids) depthOf(id, new Set());

  const layers = new Map<number, string[]>();
  for (const id of ids) {
    const d = depth.get(id) ?? 0;
    const layer = layers.get(d);
    if (layer) layer.push(id);
    else layers.set(d, [id]);
  }

  const positions = new Map<string, Point>();
  let width = 0;
  for (const [d, layer] of layers) {
    layer.sort();
    layer.forEach((id, index) => {
      positions.set(id, { x: MARGIN + index * COLUMN_WIDTH, y: MARGIN + d * ROW_HEIGHT });
    });
    width = Math.max(width, layer.length);
  }
  return {
    positions,
    width: MARGIN * 2 + Math.max(1, width) * COLUMN_WIDTH,
    height: MARGIN * 2 + layers.size * ROW_HEIGHT,
  };
}

export interface OverrideStorage {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

const OVERRIDE_KEY = "workbench-ui.gsn-overrides";

export function loadOverrides(storage: OverrideStorage): Map<string, Point> {
  const raw = storage.getItem(OVERRIDE_KEY);
  if (!raw) return new Map();
  try {
    const parsed = JSON.parse(raw) as Record<string, Point>;
    return new Map(Object.entries(parsed));
  } catch {
    return new Map();
  }
}

export function saveOverride(storage: OverrideStorage, id: string, point: Point): void {
  const overrides = loadOverrides(storage);
  overrides.set(id, point);
  storage.setItem(OVERRIDE_KEY, JSON.stringify(Object.fromEntries(overrides)));
}

export function applyOverrides(layout: GsnLayout, overrides: Map<string, Point>): GsnLayout {
  for (const [id, point] of overrides) {
    if (layout.positions.has(id)) layout.positions.set(id, point);
  }
  return layout;
}

// Pure view model: graph document + layout + selection -> drawable shapes.
// Keeping this DOM-free makes render behaviour testable without a browser.

import type { GraphDocument } from "./types.js";
import type { LayoutPoint } from "./layout.js";

export interface CircleShape {
  id: string;
  x: number;
  y: number;
  r: number;
  fill: string;
  selected: boolean;
  size: number;
  meanLens: number;
}

export interface LineShape {
  u: string;
  v: string;
  x1: number;
  y1: number;
  x2: number;
  y2: number;
  width: number;
  selected: boolean;
  loopMember: boolean;
  restored: boolean;
}

export interface Scene {
  circles: CircleShape[];
  lines: LineShape[];
}

export interface SelectionState {
  nodes: Set<string>;
  edges: Set<string>;
}

export function edgeKey(u: string, v: string): string {
  return u < v ? `${u}|${v}` : `${v}|${u}`;
}

// Low lens = most anomalous = red; high lens = blue (hue 240).
export function lensColor(value: number, lo: number, hi: number): string {
  const span = hi - lo || 1;
  const t = Math.min(1, Math.max(0, (value - lo) / span));
  return `hsl(${Math.round(240 * t)}, 70%, 55%)`;
}

function loopEdgeKeys(doc: GraphDocument): Set<string> {
  const keys = new Set<string>();
  for (const cycle of doc.features.loop_representatives) {
    for (let i = 0; i < cycle.length; i += 1) {
      keys.add(edgeKey(cycle[i], cycle[(i + 1) % cycle.length]));
    }
  }
  return keys;
}

export interface SceneOptions {
  selection?: SelectionState;
  showLoops?: boolean;
  restoredEdges?: string[][];
}

export function buildScene(doc: GraphDocument, layout: LayoutPoint[],
                           options: SceneOptions = {}): Scene {
  const positions = new Map(layout.map((p) => [p.id, p]));
  const selection = options.selection ?? { nodes: new Set(), edges: new Set() };
  const [lo, hi] = doc.lens_range;
  const maxSize = Math.max(1, ...doc.nodes.map((n) => n.size));
  const loops = options.showLoops ? loopEdgeKeys(doc) : new Set<string>();
  const restored = new Set(
    (options.restoredEdges ?? []).map(([u, v]) => edgeKey(u, v)));

  const circles = doc.nodes.map((node) => {
    const p = positions.get(node.id);
    if (!p) {
      throw new Error(`layout missing node ${node.id}`);
    }
    return {
      id: node.id,
      x: p.x,
      y: p.y,
      r: 6 + 14 * Math.sqrt(node.size / maxSize),
      fill: lensColor(node.mean_lens, lo, hi),
      selected: selection.nodes.has(node.id),
      size: node.size,
      meanLens: node.mean_lens,
    };
  });
  const lines = doc.edges.map((edge) => {
    const a = positions.get(edge.u)!;
    const b = positions.get(edge.v)!;
    const key = edgeKey(edge.u, edge.v);
    return {
      u: edge.u,
      v: edge.v,
      x1: a.x,
      y1: a.y,
      x2: b.x,
      y2: b.y,
      width: 1 + Math.log2(1 + edge.intersection),
      selected: selection.edges.has(key),
      loopMember: loops.has(key),
      restored: restored.has(key),
    };
  });
  return { circles, lines };
}

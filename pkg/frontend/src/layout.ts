// Seeded force-directed layout. Deterministic for a (document, seed) pair
// so rendered views and screenshots are reproducible.

import type { GraphDocument } from "./types.js";

export interface LayoutPoint {
  id: string;
  x: number;
  y: number;
}

function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export interface LayoutOptions {
  width: number;
  height: number;
  iterations: number;
  seed: number;
}

export const DEFAULT_LAYOUT: LayoutOptions = {
  width: 800,
  height: 600,
  iterations: 250,
  seed: 42,
};

export function forceLayout(doc: GraphDocument,
                            options: Partial<LayoutOptions> = {}): LayoutPoint[] {
  const opts = { ...DEFAULT_LAYOUT, ...options };
  const rng = mulberry32(opts.seed);
  const n = doc.nodes.length;
  if (n === 0) {
    return [];
  }
  const cx = opts.width / 2;
  const cy = opts.height / 2;
  const radius = Math.min(opts.width, opts.height) / 3;
  const xs = new Float64Array(n);
  const ys = new Float64Array(n);
  const index = new Map<string, number>();
  doc.nodes.forEach((node, i) => {
    index.set(node.id, i);
    const angle = (2 * Math.PI * i) / n + rng() * 0.3;
    xs[i] = cx + radius * Math.cos(angle) + (rng() - 0.5) * 20;
    ys[i] = cy + radius * Math.sin(angle) + (rng() - 0.5) * 20;
  });
  const edges = doc.edges.map((e) => [index.get(e.u)!, index.get(e.v)!]);
  const springLength = radius / Math.max(1, Math.sqrt(n));
  const repulsion = (radius * radius) / Math.max(1, n / 4);

  for (let iter = 0; iter < opts.iterations; iter += 1) {
    const cooling = 1 - iter / opts.iterations;
    const fx = new Float64Array(n);
    const fy = new Float64Array(n);
    for (let i = 0; i < n; i += 1) {
      for (let j = i + 1; j < n; j += 1) {
        let dx = xs[i] - xs[j];
        let dy = ys[i] - ys[j];
        let d2 = dx * dx + dy * dy;
        if (d2 < 1e-6) {
          dx = rng() - 0.5;
          dy = rng() - 0.5;
          d2 = dx * dx + dy * dy;
        }
        const push = repulsion / d2;
        fx[i] += dx * push;
        fy[i] += dy * push;
        fx[j] -= dx * push;
        fy[j] -= dy * push;
      }
    }
    for (const [a, b] of edges) {
      const dx = xs[b] - xs[a];
      const dy = ys[b] - ys[a];
      const dist = Math.sqrt(dx * dx + dy * dy) || 1e-3;
      const pull = (dist - springLength) * 0.05;
      fx[a] += (dx / dist) * pull * dist * 0.1;
      fy[a] += (dy / dist) * pull * dist * 0.1;
      fx[b] -= (dx / dist) * pull * dist * 0.1;
      fy[b] -= (dy / dist) * pull * dist * 0.1;
    }
    for (let i = 0; i < n; i += 1) {
      fx[i] += (cx - xs[i]) * 0.01;
      fy[i] += (cy - ys[i]) * 0.01;
      const mag = Math.sqrt(fx[i] * fx[i] + fy[i] * fy[i]) || 1;
      const step = Math.min(mag, 12 * cooling + 0.5);
      xs[i] += (fx[i] / mag) * step;
      ys[i] += (fy[i] / mag) * step;
      xs[i] = Math.min(opts.width - 20, Math.max(20, xs[i]));
      ys[i] = Math.min(opts.height - 20, Math.max(20, ys[i]));
    }
  }
  return doc.nodes.map((node, i) => ({ id: node.id, x: xs[i], y: ys[i] }));
}

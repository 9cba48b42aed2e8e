import { describe, expect, it } from "vitest";

import { forceLayout } from "../src/layout.js";
import { buildScene, edgeKey, lensColor } from "../src/scene.js";
import type { GraphDocument } from "../src/types.js";
import { fixture } from "./helpers.js";

const graph = fixture<GraphDocument>("graph_v1.json");

describe("force layout", () => {
  it("is deterministic for a fixed seed", () => {
    const a = forceLayout(graph, { seed: 7 });
    const b = forceLayout(graph, { seed: 7 });
    expect(a).toEqual(b);
  });

  it("varies with the seed and stays in bounds", () => {
    const a = forceLayout(graph, { seed: 7 });
    const b = forceLayout(graph, { seed: 8 });
    expect(a).not.toEqual(b);
    for (const p of a) {
      expect(p.x).toBeGreaterThanOrEqual(0);
      expect(p.x).toBeLessThanOrEqual(800);
      expect(p.y).toBeGreaterThanOrEqual(0);
      expect(p.y).toBeLessThanOrEqual(600);
      expect(Number.isFinite(p.x) && Number.isFinite(p.y)).toBe(true);
    }
  });
});

describe("scene building", () => {
  it("renders exactly the served nodes and edges", () => {
    const layout = forceLayout(graph);
    const scene = buildScene(graph, layout);
    expect(scene.circles).toHaveLength(graph.nodes.length);
    expect(scene.lines).toHaveLength(graph.edges.length);
    // every rendered number comes from the API document verbatim
    const sizes = new Map(graph.nodes.map((n) => [n.id, n.size]));
    for (const circle of scene.circles) {
      expect(circle.size).toBe(sizes.get(circle.id));
    }
  });

  it("sizes nodes by member count and colors by lens", () => {
    const layout = forceLayout(graph);
    const scene = buildScene(graph, layout);
    const biggest = graph.nodes.reduce((a, b) => (a.size >= b.size ? a : b));
    const smallest = graph.nodes.reduce((a, b) => (a.size <= b.size ? a : b));
    const rBig = scene.circles.find((c) => c.id === biggest.id)!.r;
    const rSmall = scene.circles.find((c) => c.id === smallest.id)!.r;
    expect(rBig).toBeGreaterThan(rSmall);

    const [lo, hi] = graph.lens_range;
    expect(lensColor(lo, lo, hi)).toBe("hsl(0, 70%, 55%)"); // most anomalous: red
    expect(lensColor(hi, lo, hi)).toBe("hsl(240, 70%, 55%)"); // least: blue
  });

  it("marks selections", () => {
    const layout = forceLayout(graph);
    const edge = graph.edges[0];
    const scene = buildScene(graph, layout, {
      selection: {
        nodes: new Set([graph.nodes[0].id]),
        edges: new Set([edgeKey(edge.u, edge.v)]),
      },
    });
    expect(scene.circles.filter((c) => c.selected)).toHaveLength(1);
    expect(scene.lines.filter((l) => l.selected)).toHaveLength(1);
  });

  it("overlays loop representatives as loop edges", () => {
    const square: GraphDocument = {
      api_version: 1,
      version: 1,
      lens_range: [0, 1],
      nodes: ["a", "b", "c", "d"].map((id, i) => ({
        id, interval: i % 2, size: 5, mean_lens: i / 4,
      })),
      edges: [
        { u: "a", v: "b", intersection: 2 },
        { u: "b", v: "c", intersection: 2 },
        { u: "c", v: "d", intersection: 2 },
        { u: "a", v: "d", intersection: 2 },
      ],
      features: {
        components: 1,
        component_members: [["a", "b", "c", "d"]],
        loops: 1,
        loop_representatives: [["a", "b", "c", "d"]],
        flares: [],
      },
    };
    const scene = buildScene(square, forceLayout(square), { showLoops: true });
    expect(scene.lines.filter((l) => l.loopMember)).toHaveLength(4);
    const off = buildScene(square, forceLayout(square), { showLoops: false });
    expect(off.lines.filter((l) => l.loopMember)).toHaveLength(0);
  });
});

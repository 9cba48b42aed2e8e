import { describe, expect, it } from "vitest";

import { diffGraphs } from "../src/diff.js";
import { buildScene, edgeKey } from "../src/scene.js";
import { forceLayout } from "../src/layout.js";
import type { GraphDocument, JobDocument, CompletionResult } from "../src/types.js";
import { fixture } from "./helpers.js";

const before = fixture<GraphDocument>("graph_v2.json");       // post-surgery
const after = fixture<GraphDocument>("graph_completed.json"); // post-completion
const job = fixture<JobDocument>("complete_job.json");

function recordedRestored(): string[][] {
  const result = job.result as CompletionResult;
  const variant = result.variants.find(
    (v) => v.scoring === "tanimoto" && v.variant === "downsampled-60");
  if (!variant) {
    throw new Error("fixture variant missing");
  }
  return variant.restored;
}

describe("before/after diff", () => {
  it("highlights exactly the two restored edges from the fixture job", () => {
    const restored = recordedRestored();
    expect(restored).toHaveLength(2);
    const diff = diffGraphs(before, after, restored);
    expect(diff.restoredKeys.size).toBe(2);
    expect(diff.restoredKeys).toEqual(
      new Set(restored.map(([u, v]) => edgeKey(u, v))));
    // the restored pairs are links the surgery had removed
    const addedKeys = new Set(diff.addedEdges.map(([u, v]) => edgeKey(u, v)));
    for (const key of diff.restoredKeys) {
      expect(addedKeys.has(key)).toBe(true);
    }
  });

  it("marks restored edges in the rendered scene", () => {
    const restored = recordedRestored();
    const scene = buildScene(after, forceLayout(after),
                             { restoredEdges: restored });
    const highlighted = scene.lines.filter((l) => l.restored);
    expect(highlighted).toHaveLength(2);
    const keys = new Set(highlighted.map((l) => edgeKey(l.u, l.v)));
    expect(keys).toEqual(new Set(restored.map(([u, v]) => edgeKey(u, v))));
  });

  it("reports identical graphs as unchanged", () => {
    const diff = diffGraphs(before, before);
    expect(diff.addedEdges).toEqual([]);
    expect(diff.removedEdges).toEqual([]);
    expect(diff.addedNodes).toEqual([]);
    expect(diff.removedNodes).toEqual([]);
  });
});

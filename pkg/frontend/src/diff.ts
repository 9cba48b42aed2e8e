// Before/after comparison of two graph versions, with the report's
// restored edges called out for highlighting.

import type { GraphDocument } from "./types.js";
import { edgeKey } from "./scene.js";

export interface GraphDiff {
  addedEdges: string[][];
  removedEdges: string[][];
  addedNodes: string[];
  removedNodes: string[];
  restoredKeys: Set<string>;
}

export function diffGraphs(before: GraphDocument, after: GraphDocument,
                           restoredEdges: string[][] = []): GraphDiff {
  const beforeEdges = new Map(
    before.edges.map((e) => [edgeKey(e.u, e.v), [e.u, e.v]]));
  const afterEdges = new Map(
    after.edges.map((e) => [edgeKey(e.u, e.v), [e.u, e.v]]));
  const beforeNodes = new Set(before.nodes.map((n) => n.id));
  const afterNodes = new Set(after.nodes.map((n) => n.id));

  const addedEdges: string[][] = [];
  for (const [key, pair] of afterEdges) {
    if (!beforeEdges.has(key)) {
      addedEdges.push(pair);
    }
  }
  const removedEdges: string[][] = [];
  for (const [key, pair] of beforeEdges) {
    if (!afterEdges.has(key)) {
      removedEdges.push(pair);
    }
  }
  const restoredKeys = new Set<string>();
  for (const [u, v] of restoredEdges) {
    const key = edgeKey(u, v);
    if (afterEdges.has(key)) {
      restoredKeys.add(key);
    }
  }
  return {
    addedEdges,
    removedEdges,
    addedNodes: [...afterNodes].filter((n) => !beforeNodes.has(n)).sort(),
    removedNodes: [...beforeNodes].filter((n) => !afterNodes.has(n)).sort(),
    restoredKeys,
  };
}

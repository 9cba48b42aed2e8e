// Completion form state: selected lacuna edges, reference scaffolds, the
// scoring variant, and the target interval. Submittable only when at least
// one edge and one scaffold are chosen; the built request bodies match the
// service schema exactly.

import type { CompletionRequest, SurgeryRequest } from "./types.js";

export interface CompletionForm {
  edges: string[][];
  scaffolds: string[];
  placeholderCount: number;
  scoring: "tanimoto" | "lens" | "both";
  intervalMode: "auto" | "manual";
  intervalLo: number | null;
  intervalHi: number | null;
  samples: number;
  maxNeighbors: number[];
  autoScaffolds: boolean;
}

export function emptyForm(): CompletionForm {
  return {
    edges: [],
    scaffolds: [],
    placeholderCount: 2,
    scoring: "both",
    intervalMode: "auto",
    intervalLo: null,
    intervalHi: null,
    samples: 350,
    maxNeighbors: [60, 35],
    autoScaffolds: false,
  };
}

export function validateForm(form: CompletionForm): string[] {
  const problems: string[] = [];
  if (form.edges.length === 0) {
    problems.push("select at least one edge");
  }
  if (!form.autoScaffolds && form.scaffolds.length === 0) {
    problems.push("select at least one scaffold");
  }
  if (!(form.placeholderCount > 0)) {
    problems.push("placeholder count must be positive");
  }
  if (form.intervalMode === "manual") {
    if (form.intervalLo === null || form.intervalHi === null) {
      problems.push("manual interval needs both bounds");
    } else if (!(form.intervalLo < form.intervalHi)) {
      problems.push("interval low bound must be below the high bound");
    }
  }
  if (!(form.samples > 0)) {
    problems.push("samples must be positive");
  }
  if (form.maxNeighbors.length === 0
      || form.maxNeighbors.some((m) => !(m > 0))) {
    problems.push("neighbor thresholds must be positive");
  }
  return problems;
}

export function submittable(form: CompletionForm): boolean {
  return validateForm(form).length === 0;
}

export function buildSurgeryRequest(form: CompletionForm): SurgeryRequest {
  return {
    kind: "lacuna-surgery",
    params: { edges: form.edges.map((e) => [...e]) },
  };
}

export function buildCompletionRequest(form: CompletionForm): CompletionRequest {
  const interval: "auto" | [number, number] =
    form.intervalMode === "auto"
      ? "auto"
      : [form.intervalLo as number, form.intervalHi as number];
  const params: CompletionRequest["params"] = {
    scoring: form.scoring,
    samples: form.samples,
    max_neighbors: [...form.maxNeighbors],
    interval,
    placeholder_count: form.placeholderCount,
  };
  if (!form.autoScaffolds) {
    params.scaffolds = [...form.scaffolds];
  }
  return { kind: "generate-and-complete", params };
}

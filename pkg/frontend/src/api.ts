// Typed client for the service JSON API, with structural validation so a
// malformed document is reported instead of rendered.

import type {
  GraphDocument,
  JobDocument,
  JobRequest,
  NodeDetailDocument,
  ReportDocument,
} from "./types.js";

export class ApiError extends Error {
  constructor(message: string, readonly status?: number) {
    super(message);
  }
}

function fail(path: string, reason: string): never {
  throw new ApiError(`malformed document at ${path}: ${reason}`);
}

function checkNumber(value: unknown, path: string): number {
  if (typeof value !== "number" || Number.isNaN(value)) {
    fail(path, "expected a number");
  }
  return value;
}

function checkString(value: unknown, path: string): string {
  if (typeof value !== "string") {
    fail(path, "expected a string");
  }
  return value;
}

function checkArray(value: unknown, path: string): unknown[] {
  if (!Array.isArray(value)) {
    fail(path, "expected an array");
  }
  return value;
}

export function validateGraphDocument(raw: unknown): GraphDocument {
  const doc = raw as Record<string, unknown>;
  if (typeof doc !== "object" || doc === null) {
    fail("graph", "not an object");
  }
  checkNumber(doc.api_version, "graph.api_version");
  checkNumber(doc.version, "graph.version");
  const lens = checkArray(doc.lens_range, "graph.lens_range");
  if (lens.length !== 2) {
    fail("graph.lens_range", "expected [lo, hi]");
  }
  const nodeIds = new Set<string>();
  for (const [i, node] of checkArray(doc.nodes, "graph.nodes").entries()) {
    const n = node as Record<string, unknown>;
    checkString(n.id, `graph.nodes[${i}].id`);
    checkNumber(n.interval, `graph.nodes[${i}].interval`);
    checkNumber(n.size, `graph.nodes[${i}].size`);
    checkNumber(n.mean_lens, `graph.nodes[${i}].mean_lens`);
    nodeIds.add(n.id as string);
  }
  for (const [i, edge] of checkArray(doc.edges, "graph.edges").entries()) {
    const e = edge as Record<string, unknown>;
    const u = checkString(e.u, `graph.edges[${i}].u`);
    const v = checkString(e.v, `graph.edges[${i}].v`);
    checkNumber(e.intersection, `graph.edges[${i}].intersection`);
    if (!nodeIds.has(u) || !nodeIds.has(v)) {
      fail(`graph.edges[${i}]`, "endpoint not in nodes");
    }
  }
  const features = doc.features as Record<string, unknown>;
  if (typeof features !== "object" || features === null) {
    fail("graph.features", "missing feature report");
  }
  checkNumber(features.components, "graph.features.components");
  checkNumber(features.loops, "graph.features.loops");
  checkArray(features.loop_representatives, "graph.features.loop_representatives");
  checkArray(features.flares, "graph.features.flares");
  return raw as GraphDocument;
}

export function validateJobRequest(body: JobRequest): string[] {
  const problems: string[] = [];
  if (body.kind === "lacuna-surgery") {
    if (!body.params.edges.length) {
      problems.push("select at least one edge");
    }
    for (const edge of body.params.edges) {
      if (edge.length !== 2 || !edge[0] || !edge[1]) {
        problems.push(`bad edge ${JSON.stringify(edge)}`);
      }
    }
  } else {
    const p = body.params;
    if (!["tanimoto", "lens", "both"].includes(p.scoring)) {
      problems.push(`unknown scoring ${p.scoring}`);
    }
    if (!(p.samples > 0)) {
      problems.push("samples must be positive");
    }
    if (!(p.placeholder_count > 0)) {
      problems.push("placeholder count must be positive");
    }
    if (p.interval !== "auto") {
      if (!Array.isArray(p.interval) || p.interval.length !== 2
          || !(p.interval[0] < p.interval[1])) {
        problems.push("interval must be auto or [lo, hi] with lo < hi");
      }
    }
    if (p.max_neighbors.some((m) => !(m > 0))) {
      problems.push("neighbor thresholds must be positive");
    }
  }
  return problems;
}

export class ApiClient {
  constructor(readonly base: string = "") {}

  private async getJson(path: string): Promise<unknown> {
    const response = await fetch(this.base + path);
    if (!response.ok) {
      let message = `GET ${path} failed (${response.status})`;
      try {
        const body = (await response.json()) as { error?: string };
        if (body.error) {
          message = body.error;
        }
      } catch {
        // keep the status message
      }
      throw new ApiError(message, response.status);
    }
    return response.json();
  }

  async graph(version?: number): Promise<GraphDocument> {
    const suffix = version === undefined ? "" : `?version=${version}`;
    return validateGraphDocument(await this.getJson(`/api/graph${suffix}`));
  }

  async nodeDetail(id: string): Promise<NodeDetailDocument> {
    return (await this.getJson(`/api/nodes/${id}`)) as NodeDetailDocument;
  }

  async job(id: string): Promise<JobDocument> {
    return (await this.getJson(`/api/jobs/${id}`)) as JobDocument;
  }

  async report(id: string): Promise<ReportDocument> {
    return (await this.getJson(`/api/reports/${id}`)) as ReportDocument;
  }

  async submit(body: JobRequest): Promise<string> {
    const problems = validateJobRequest(body);
    if (problems.length) {
      throw new ApiError(problems.join("; "));
    }
    const response = await fetch(this.base + "/api/jobs", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    const payload = (await response.json()) as {
      job_id?: string;
      error?: string;
    };
    if (!response.ok || !payload.job_id) {
      throw new ApiError(payload.error ?? `submit failed (${response.status})`,
                         response.status);
    }
    return payload.job_id;
  }
}

// Documents served by the analysis service (api_version 1).

export interface GraphNodeDoc {
  id: string;
  interval: number;
  size: number;
  mean_lens: number;
}

export interface GraphEdgeDoc {
  u: string;
  v: string;
  intersection: number;
}

export interface FeatureReportDoc {
  components: number;
  component_members: string[][];
  loops: number;
  loop_representatives: string[][];
  flares: string[][];
}

export interface GraphDocument {
  api_version: number;
  version: number;
  lens_range: [number, number];
  nodes: GraphNodeDoc[];
  edges: GraphEdgeDoc[];
  features: FeatureReportDoc;
}

export interface ScaffoldCount {
  smiles: string;
  count: number;
}

export interface NodeDetailDocument {
  api_version: number;
  id: string;
  interval: number;
  size: number;
  mean_lens: number;
  members: string[];
  member_smiles: string[];
  scaffolds: ScaffoldCount[];
}

export type JobStatus = "queued" | "running" | "done" | "failed";

export interface SurgeryResult {
  new_version: number;
  removed_count: number;
  target_edges: string[][];
}

export interface CompletionVariant {
  scoring: string;
  variant: string;
  version: number;
  added: number;
  restored: string[][];
}

export interface CompletionResult {
  report_id: string;
  variants: CompletionVariant[];
  target_edges: string[][];
}

export interface JobDocument {
  api_version: number;
  id: string;
  kind: "lacuna-surgery" | "generate-and-complete";
  status: JobStatus;
  result: SurgeryResult | CompletionResult | null;
  error: string | null;
}

export interface ReportDocument {
  api_version: number;
  id: string;
  interval: [number, number];
  target: number;
  table: {
    target_edges: string[][];
    rows: {
      variant: string;
      added_count: number;
      restored: string[][];
      unmatched_nodes: string[];
    }[];
  };
  variants: CompletionVariant[];
  text: string;
}

export interface SurgeryRequest {
  kind: "lacuna-surgery";
  params: { edges: string[][] };
}

export interface CompletionRequest {
  kind: "generate-and-complete";
  params: {
    scoring: "tanimoto" | "lens" | "both";
    samples: number;
    max_neighbors: number[];
    interval: "auto" | [number, number];
    placeholder_count: number;
    scaffolds?: string[];
  };
}

export type JobRequest = SurgeryRequest | CompletionRequest;

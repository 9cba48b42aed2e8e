// Single-page expert loop: explore the Mapper graph, pick lacuna edges and
// reference scaffolds, run surgery + generative completion, compare graph
// versions with restored edges highlighted. Renders only server-confirmed
// state; the sole mutation path is POST /api/jobs.

import { ApiClient, ApiError } from "./api.js";
import { DEFAULT_LAYOUT, forceLayout } from "./layout.js";
import { Scene, SelectionState, buildScene, edgeKey } from "./scene.js";
import { CompletionForm, buildCompletionRequest, buildSurgeryRequest,
         emptyForm, submittable, validateForm } from "./forms.js";
import { diffGraphs } from "./diff.js";
import { pollJob } from "./poll.js";
import type { CompletionResult, GraphDocument, SurgeryResult } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";

interface AppState {
  client: ApiClient;
  versions: Map<number, GraphDocument>;
  currentVersion: number;
  baseVersion: number;
  compareVersion: number | null;
  restored: string[][];
  selection: SelectionState;
  form: CompletionForm;
  showLoops: boolean;
  busy: boolean;
}

const state: AppState = {
  client: new ApiClient(""),
  versions: new Map(),
  currentVersion: 1,
  baseVersion: 1,
  compareVersion: null,
  restored: [],
  selection: { nodes: new Set(), edges: new Set() },
  form: emptyForm(),
  showLoops: true,
  busy: false,
};

function el<K extends keyof HTMLElementTagNameMap>(
    tag: K, attrs: Record<string, string> = {},
    text?: string): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

function statusLine(message: string, kind: "info" | "error" = "info"): void {
  const bar = document.getElementById("status")!;
  bar.textContent = message;
  bar.className = kind;
}

async function loadVersion(version?: number): Promise<GraphDocument> {
  const doc = await state.client.graph(version);
  state.versions.set(doc.version, doc);
  return doc;
}

function renderScene(svg: SVGSVGElement, doc: GraphDocument,
                     restored: string[][]): void {
  const layout = forceLayout(doc, { seed: DEFAULT_LAYOUT.seed });
  const scene: Scene = buildScene(doc, layout, {
    selection: state.selection,
    showLoops: state.showLoops,
    restoredEdges: restored,
  });
  svg.textContent = "";
  for (const line of scene.lines) {
    const shape = document.createElementNS(SVG_NS, "line");
    shape.setAttribute("x1", line.x1.toFixed(1));
    shape.setAttribute("y1", line.y1.toFixed(1));
    shape.setAttribute("x2", line.x2.toFixed(1));
    shape.setAttribute("y2", line.y2.toFixed(1));
    shape.setAttribute("stroke-width", line.width.toFixed(1));
    let cls = "edge";
    if (line.selected) cls += " selected";
    if (line.loopMember) cls += " loop";
    if (line.restored) cls += " restored";
    shape.setAttribute("class", cls);
    shape.addEventListener("click", () => toggleEdge(line.u, line.v));
    svg.appendChild(shape);
  }
  for (const circle of scene.circles) {
    const shape = document.createElementNS(SVG_NS, "circle");
    shape.setAttribute("cx", circle.x.toFixed(1));
    shape.setAttribute("cy", circle.y.toFixed(1));
    shape.setAttribute("r", circle.r.toFixed(1));
    shape.setAttribute("fill", circle.fill);
    shape.setAttribute("class", circle.selected ? "node selected" : "node");
    const title = document.createElementNS(SVG_NS, "title");
    title.textContent =
      `${circle.id}: ${circle.size} molecules, lens ${circle.meanLens.toFixed(4)}`;
    shape.appendChild(title);
    shape.addEventListener("click", () => {
      void showNodeDetail(circle.id);
    });
    svg.appendChild(shape);
  }
}

function toggleEdge(u: string, v: string): void {
  const key = edgeKey(u, v);
  if (state.selection.edges.has(key)) {
    state.selection.edges.delete(key);
    state.form.edges = state.form.edges.filter(
      (e) => edgeKey(e[0], e[1]) !== key);
  } else {
    state.selection.edges.add(key);
    state.form.edges.push([u, v]);
  }
  refresh();
}

async function showNodeDetail(nodeId: string): Promise<void> {
  const panel = document.getElementById("detail")!;
  panel.textContent = "loading...";
  try {
    const detail = await state.client.nodeDetail(nodeId);
    panel.textContent = "";
    panel.appendChild(el("h3", {}, `${detail.id} (${detail.size} molecules)`));
    panel.appendChild(el("p", {},
      `interval ${detail.interval}, mean lens ${detail.mean_lens.toFixed(4)}`));
    const list = el("ul", { class: "scaffolds" });
    for (const scaffold of detail.scaffolds) {
      const item = el("li");
      const chosen = state.form.scaffolds.includes(scaffold.smiles);
      const button = el("button", {},
                        chosen ? "remove" : "use as reference");
      button.addEventListener("click", () => {
        if (state.form.scaffolds.includes(scaffold.smiles)) {
          state.form.scaffolds = state.form.scaffolds.filter(
            (s) => s !== scaffold.smiles);
        } else {
          state.form.scaffolds.push(scaffold.smiles);
        }
        void showNodeDetail(nodeId);
        refresh();
      });
      item.appendChild(el("code", {}, scaffold.smiles));
      item.appendChild(el("span", {}, ` x${scaffold.count} `));
      item.appendChild(button);
      list.appendChild(item);
    }
    panel.appendChild(list);
    const smiles = el("details");
    smiles.appendChild(el("summary", {}, "member SMILES"));
    const pre = el("pre", {}, detail.member_smiles.join("\n"));
    smiles.appendChild(pre);
    panel.appendChild(smiles);
  } catch (err) {
    panel.textContent = err instanceof Error ? err.message : String(err);
  }
}

function renderForm(): void {
  const panel = document.getElementById("form")!;
  panel.textContent = "";
  panel.appendChild(el("h3", {}, "completion job"));
  panel.appendChild(el("p", {},
    `edges: ${state.form.edges.map((e) => `${e[0]}-${e[1]}`).join(", ") || "none"}`));
  panel.appendChild(el("p", {},
    `scaffolds: ${state.form.scaffolds.length || (state.form.autoScaffolds ? "auto" : "none")}`));

  const scoring = el("select", { id: "scoring" });
  for (const option of ["both", "tanimoto", "lens"]) {
    const opt = el("option", { value: option }, option);
    if (option === state.form.scoring) {
      opt.setAttribute("selected", "selected");
    }
    scoring.appendChild(opt);
  }
  scoring.addEventListener("change", () => {
    state.form.scoring = scoring.value as CompletionForm["scoring"];
  });
  const scoringLabel = el("label", {}, "scoring ");
  scoringLabel.appendChild(scoring);
  panel.appendChild(scoringLabel);

  const autoScaffolds = el("input", { type: "checkbox", id: "auto-scaffolds" });
  if (state.form.autoScaffolds) {
    autoScaffolds.setAttribute("checked", "checked");
  }
  autoScaffolds.addEventListener("change", () => {
    state.form.autoScaffolds = (autoScaffolds as HTMLInputElement).checked;
    refresh();
  });
  const autoLabel = el("label", {}, " scaffolds from removed records ");
  autoLabel.appendChild(autoScaffolds);
  panel.appendChild(autoLabel);

  const intervalMode = el("select", { id: "interval-mode" });
  for (const option of ["auto", "manual"]) {
    const opt = el("option", { value: option }, option);
    if (option === state.form.intervalMode) {
      opt.setAttribute("selected", "selected");
    }
    intervalMode.appendChild(opt);
  }
  const lo = el("input", { type: "number", step: "0.0001", id: "lo" });
  const hi = el("input", { type: "number", step: "0.0001", id: "hi" });
  intervalMode.addEventListener("change", () => {
    state.form.intervalMode = intervalMode.value as "auto" | "manual";
    refresh();
  });
  lo.addEventListener("change", () => {
    state.form.intervalLo = lo.value === "" ? null : Number(lo.value);
    refresh();
  });
  hi.addEventListener("change", () => {
    state.form.intervalHi = hi.value === "" ? null : Number(hi.value);
    refresh();
  });
  const intervalLabel = el("label", {}, " interval ");
  intervalLabel.appendChild(intervalMode);
  if (state.form.intervalMode === "manual") {
    intervalLabel.appendChild(lo);
    intervalLabel.appendChild(hi);
  }
  panel.appendChild(intervalLabel);

  const problems = validateForm(state.form);
  if (problems.length && (state.form.edges.length || state.form.scaffolds.length)) {
    const list = el("ul", { class: "problems" });
    for (const problem of problems) {
      list.appendChild(el("li", {}, problem));
    }
    panel.appendChild(list);
  }

  const submit = el("button", { id: "submit" }, "sever edges and complete");
  if (!submittable(state.form) || state.busy) {
    submit.setAttribute("disabled", "disabled");
  }
  submit.addEventListener("click", () => {
    void runCompletion();
  });
  panel.appendChild(submit);
}

async function runCompletion(): Promise<void> {
  state.busy = true;
  refresh();
  try {
    statusLine("surgery running...");
    const surgeryId = await state.client.submit(buildSurgeryRequest(state.form));
    const surgery = await pollJob(state.client, surgeryId,
      (job) => statusLine(`surgery ${job.status}...`));
    if (surgery.status === "failed") {
      statusLine(`surgery failed: ${surgery.error}`, "error");
      return;
    }
    const surgeryResult = surgery.result as SurgeryResult;
    await loadVersion(surgeryResult.new_version);
    state.baseVersion = surgeryResult.new_version;
    state.currentVersion = surgeryResult.new_version;
    statusLine(`surgery removed ${surgeryResult.removed_count} molecules; `
               + "generating...");

    const completionId = await state.client.submit(
      buildCompletionRequest(state.form));
    const completion = await pollJob(state.client, completionId,
      (job) => statusLine(`completion ${job.status}...`));
    if (completion.status === "failed") {
      statusLine(`completion failed: ${completion.error}`, "error");
      return;
    }
    const result = completion.result as CompletionResult;
    const report = await state.client.report(result.report_id);
    renderReport(report.text, result);
    const best = result.variants.find((v) => v.restored.length > 0)
      ?? result.variants[result.variants.length - 1];
    if (best) {
      await loadVersion(best.version);
      state.compareVersion = best.version;
      state.currentVersion = best.version;
      state.restored = best.restored;
    }
    statusLine("completion done");
  } catch (err) {
    statusLine(err instanceof ApiError ? err.message : String(err), "error");
  } finally {
    state.busy = false;
    refresh();
  }
}

function renderReport(text: string, result: CompletionResult): void {
  const panel = document.getElementById("report")!;
  panel.textContent = "";
  panel.appendChild(el("h3", {}, "restoration report"));
  panel.appendChild(el("pre", {}, text));
  const list = el("ul");
  for (const variant of result.variants) {
    const links = variant.restored.map((e) => `(${e[0]}, ${e[1]})`).join(", ");
    const item = el("li", {},
      `${variant.scoring}/${variant.variant}: ${links || "no links"} `
      + `(+${variant.added}) `);
    const view = el("button", {}, "view");
    view.addEventListener("click", () => {
      void (async () => {
        await loadVersion(variant.version);
        state.currentVersion = variant.version;
        state.restored = variant.restored;
        refresh();
      })();
    });
    item.appendChild(view);
    list.appendChild(item);
  }
  panel.appendChild(list);
}

function renderVersions(): void {
  const bar = document.getElementById("versions")!;
  bar.textContent = "versions: ";
  for (const version of [...state.versions.keys()].sort((a, b) => a - b)) {
    const button = el("button", {},
      version === state.currentVersion ? `[${version}]` : String(version));
    button.addEventListener("click", () => {
      state.currentVersion = version;
      refresh();
    });
    bar.appendChild(button);
  }
  const loops = el("button", { id: "loops" },
                   state.showLoops ? "loops: on" : "loops: off");
  loops.addEventListener("click", () => {
    state.showLoops = !state.showLoops;
    refresh();
  });
  bar.appendChild(loops);
}

function renderDiffSummary(): void {
  const panel = document.getElementById("diff")!;
  panel.textContent = "";
  if (state.compareVersion === null
      || !state.versions.has(state.baseVersion)
      || !state.versions.has(state.compareVersion)) {
    return;
  }
  const before = state.versions.get(state.baseVersion)!;
  const after = state.versions.get(state.compareVersion)!;
  const diff = diffGraphs(before, after, state.restored);
  panel.appendChild(el("h3", {},
    `diff v${state.baseVersion} -> v${state.compareVersion}`));
  panel.appendChild(el("p", {},
    `restored: ${[...diff.restoredKeys].join(", ") || "none"}`));
  panel.appendChild(el("p", {},
    `edges +${diff.addedEdges.length} / -${diff.removedEdges.length}, `
    + `nodes +${diff.addedNodes.length} / -${diff.removedNodes.length}`));
}

function refresh(): void {
  const doc = state.versions.get(state.currentVersion);
  if (!doc) {
    return;
  }
  const svg = document.getElementById("graph") as unknown as SVGSVGElement;
  try {
    renderScene(svg, doc, state.restored);
  } catch (err) {
    statusLine(`render error: ${err}`, "error");
    return;
  }
  const features = doc.features;
  document.getElementById("features")!.textContent =
    `components ${features.components}, loops ${features.loops}, `
    + `flares ${features.flares.length}`;
  renderVersions();
  renderForm();
  renderDiffSummary();
}

async function start(): Promise<void> {
  try {
    const doc = await loadVersion();
    state.currentVersion = doc.version;
    state.baseVersion = doc.version;
    if (doc.nodes.length === 0) {
      statusLine("graph is empty", "error");
      return;
    }
    statusLine(`loaded graph v${doc.version}: ${doc.nodes.length} nodes, `
               + `${doc.edges.length} edges`);
    refresh();
  } catch (err) {
    statusLine(err instanceof ApiError ? err.message : String(err), "error");
  }
}

if (typeof document !== "undefined" && document.getElementById("graph")) {
  void start();
}

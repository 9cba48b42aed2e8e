"""Local HTTP facade over the pipeline for interactive lacuna selection and
completion.

One session wraps one stage directory (stages through `mapper` must have
run).  Reads are served from immutable per-version documents; mutating
jobs (surgery, generate-and-complete) run on a single worker thread, so at
most one writer is active and every served version stays byte-stable.
"""

from __future__ import annotations

import json
import mimetypes
import os
import queue
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from . import anomaly, chem, generator, pipeline
from .completion import CompletionReport, LacunaSpec, ScoreInterval, \
    carve_lacuna, check_restoration, compute_target_interval, \
    downsample_by_neighbors, filter_by_score
from .dataset import Record
from .fingerprint import morgan_fingerprint
from .mapper import MapperGraph, detect_features

API_VERSION = 1


class ValidationFailed(ValueError):
    pass


@dataclass
class Job:
    id: str
    kind: str
    status: str = "queued"  # queued | running | done | failed
    request: dict = field(default_factory=dict)
    result: dict | None = None
    error: str | None = None


class Session:
    """Loaded dataset, immutable graph versions, and the job registry."""

    def __init__(self, config, stage_dir):
        self.config = config
        self.stage_dir = stage_dir
        self.records = pipeline._records_with_features(stage_dir, config)
        self.scores = {r.id: r.lens for r in self.records}
        self.cover = pipeline._original_cover(config, self.scores)
        self.forest = pipeline._forest_from_json(
            pipeline._read(stage_dir, "forest.json"))
        graph = MapperGraph.from_text(
            pipeline._read(stage_dir, "mapper_graph.txt"))
        self.lock = threading.Lock()
        self.versions: dict[int, dict] = {}
        self.version_records: dict[int, list[Record]] = {}
        self.graphs: dict[int, MapperGraph] = {}
        self.jobs: dict[str, Job] = {}
        self.reports: dict[str, dict] = {}
        self.lacuna: dict | None = None
        self._job_counter = 0
        self._report_counter = 0
        self._register_version(graph, self.records)

    def _register_version(self, graph: MapperGraph, records) -> int:
        with self.lock:
            version = len(self.versions) + 1
            doc = self._graph_document(graph, version)
            self.versions[version] = doc
            self.version_records[version] = records
            self.graphs[version] = graph
            return version

    def _graph_document(self, graph: MapperGraph, version: int) -> dict:
        features = detect_features(graph)
        lens_values = [n.mean_lens for n in graph.nodes]
        return {
            "api_version": API_VERSION,
            "version": version,
            "lens_range": [min(lens_values), max(lens_values)]
            if lens_values else [0.0, 0.0],
            "nodes": [{"id": n.id, "interval": n.interval_index,
                       "size": n.size, "mean_lens": n.mean_lens}
                      for n in graph.nodes],
            "edges": [{"u": u, "v": v, "intersection": w}
                      for u, v, w in graph.edges],
            "features": features.to_json_dict(),
        }

    @property
    def latest_version(self) -> int:
        return len(self.versions)

    def graph_document(self, version: int | None) -> dict:
        with self.lock:
            if version is None:
                version = self.latest_version
            if version not in self.versions:
                raise KeyError(version)
            return self.versions[version]

    def node_detail(self, node_id: str) -> dict:
        with self.lock:
            graph = self.graphs[self.latest_version]
            records = self.version_records[self.latest_version]
        node = None
        for n in graph.nodes:
            if n.id == node_id:
                node = n
                break
        if node is None:
            raise KeyError(node_id)
        by_id = {r.id: r for r in records}
        members = sorted(node.members)
        smiles = [by_id[m].smiles for m in members if m in by_id]
        scaffold_counts: dict[str, int] = {}
        for s in smiles:
            try:
                scaffold = chem.murcko_scaffold(chem.parse_smiles(s))
            except (chem.NoRings, chem.SmilesError, ValueError):
                continue
            scaffold_counts[scaffold.smiles] = \
                scaffold_counts.get(scaffold.smiles, 0) + 1
        ranked = sorted(scaffold_counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return {
            "api_version": API_VERSION,
            "id": node.id,
            "interval": node.interval_index,
            "size": node.size,
            "mean_lens": node.mean_lens,
            "members": members,
            "member_smiles": smiles,
            "scaffolds": [{"smiles": s, "count": c} for s, c in ranked],
        }

    # ---- jobs ---------------------------------------------------------

    def submit(self, payload: dict) -> str:
        kind = payload.get("kind")
        if kind not in ("lacuna-surgery", "generate-and-complete"):
            raise ValidationFailed(f"unknown job kind {kind!r}")
        params = payload.get("params", {})
        if kind == "lacuna-surgery":
            edges = params.get("edges")
            if not edges or not isinstance(edges, list):
                raise ValidationFailed("surgery requires a list of edges")
            with self.lock:
                graph = self.graphs[self.latest_version]
            known = {n.id for n in graph.nodes}
            for edge in edges:
                if len(edge) != 2 or edge[0] not in known \
                        or edge[1] not in known:
                    raise ValidationFailed(f"unknown node in edge {edge!r}")
                if not graph.has_edge(edge[0], edge[1]):
                    raise ValidationFailed(f"no such edge {edge!r}")
        else:
            if self.lacuna is None:
                raise ValidationFailed("run a lacuna-surgery job first")
            scoring = params.get("scoring", "both")
            if scoring not in ("tanimoto", "lens", "both"):
                raise ValidationFailed(f"unknown scoring {scoring!r}")
            interval = params.get("interval", "auto")
            if interval != "auto":
                if (not isinstance(interval, list) or len(interval) != 2
                        or not interval[0] < interval[1]):
                    raise ValidationFailed("interval must be 'auto' or [lo, hi]")
            for smiles in params.get("scaffolds", []):
                try:
                    chem.parse_smiles(smiles)
                except (chem.SmilesError, ValueError) as exc:
                    raise ValidationFailed(f"bad scaffold {smiles!r}: {exc}")
        with self.lock:
            self._job_counter += 1
            job = Job(id=f"j{self._job_counter}", kind=kind, request=payload)
            self.jobs[job.id] = job
        return job.id

    def job_document(self, job_id: str) -> dict:
        with self.lock:
            if job_id not in self.jobs:
                raise KeyError(job_id)
            job = self.jobs[job_id]
            return {
                "api_version": API_VERSION,
                "id": job.id,
                "kind": job.kind,
                "status": job.status,
                "result": job.result,
                "error": job.error,
            }

    def report_document(self, report_id: str) -> dict:
        with self.lock:
            if report_id not in self.reports:
                raise KeyError(report_id)
            return self.reports[report_id]

    def run_job(self, job: Job):
        if job.kind == "lacuna-surgery":
            job.result = self._run_surgery(job.request.get("params", {}))
        else:
            job.result = self._run_completion(job.request.get("params", {}))

    def _run_surgery(self, params) -> dict:
        with self.lock:
            base_version = self.latest_version
            graph = self.graphs[base_version]
            records = self.version_records[base_version]
        edges = [tuple(e) for e in params["edges"]]
        kept, spec = carve_lacuna(graph, records, edges)
        rebuilt = pipeline._build_graph(kept, self.config, self.cover)
        version = self._register_version(rebuilt, kept)
        self.lacuna = {"spec": spec, "base_version": base_version,
                       "reduced_version": version, "records": kept}
        return {
            "new_version": version,
            "removed_count": len(spec.removed_ids),
            "target_edges": [list(e) for e in spec.target_edges],
        }

    def _run_completion(self, params) -> dict:
        lacuna = self.lacuna
        spec: LacunaSpec = lacuna["spec"]
        reduced = lacuna["records"]
        with self.lock:
            original = self.graphs[lacuna["base_version"]]
        gen_cfg = self.config.generator
        seed = int(params.get("seed", gen_cfg.seed))
        samples = int(params.get("samples", gen_cfg.samples))
        scoring_choice = params.get("scoring", "both")
        max_neighbors = [int(x) for x in params.get(
            "max_neighbors", self.config.complete.max_neighbors)]
        placeholder_count = int(params.get(
            "placeholder_count", gen_cfg.placeholders_per_scaffold))

        interval_param = params.get("interval", "auto")
        if interval_param == "auto":
            u_nodes, v_nodes = pipeline._edge_sides(original,
                                                    spec.target_edges)
            interval, target = compute_target_interval(u_nodes, v_nodes,
                                                       self.scores)
        else:
            lo, hi = float(interval_param[0]), float(interval_param[1])
            interval, target = ScoreInterval(lo, hi), (lo + hi) / 2.0

        references = params.get("scaffolds") or None
        if not references:
            all_records = {r.id: r for r in self.records}
            removed = [all_records[i] for i in sorted(spec.removed_ids)]
            references = pipeline._reference_scaffolds(self.config,
                                                       self.stage_dir, removed)
        if not references:
            raise ValidationFailed("no usable reference scaffolds")
        gen_params = pipeline.GeneratorParams(
            order=gen_cfg.order, seed=seed, samples=samples,
            max_len=gen_cfg.max_len, temperature=gen_cfg.temperature,
            fragment_budget=gen_cfg.fragment_budget,
            max_attempts=gen_cfg.max_attempts,
            scaffold_variants=gen_cfg.scaffold_variants,
            placeholders_per_scaffold=placeholder_count,
            refine_rounds=gen_cfg.refine_rounds,
            refine_batch=gen_cfg.refine_batch,
            elite_fraction=gen_cfg.elite_fraction,
            elite_weight=gen_cfg.elite_weight, tau=gen_cfg.tau)
        shadow = pipeline.PipelineConfig(
            dataset_path=self.config.dataset_path,
            fingerprint=self.config.fingerprint, forest=self.config.forest,
            cover=self.config.cover, spectral=self.config.spectral,
            persistence=self.config.persistence,
            lacuna=pipeline.LacunaParams(edges=tuple(spec.target_edges)),
            generator=gen_params, complete=self.config.complete)
        placeholders = pipeline._placeholder_scaffolds(shadow, references)

        corpus = [r.smiles for r in reduced]
        base_policy = generator.train_policy(corpus, order=gen_params.order)
        fp_cfg = self.config.fingerprint
        query_fps = [morgan_fingerprint(chem.parse_smiles(s), fp_cfg.radius,
                                        fp_cfg.n_bits) for s in references]
        scorers = {}
        if scoring_choice in ("tanimoto", "both"):
            scorers["tanimoto"] = generator.TanimotoScoring(
                query_fps=query_fps, radius=fp_cfg.radius,
                n_bits=fp_cfg.n_bits)
        if scoring_choice in ("lens", "both"):
            scorers["lens"] = generator.LensScoring(
                forest=self.forest, target=target, tau=gen_params.tau,
                radius=fp_cfg.radius, n_bits=fp_cfg.n_bits)

        sampler = generator.SamplerConfig(
            max_len=gen_params.max_len, temperature=gen_params.temperature,
            seed=seed, max_attempts=gen_params.max_attempts,
            fragment_budget=gen_params.fragment_budget,
            elite_weight=gen_params.elite_weight)
        report = CompletionReport(target_edges=list(spec.target_edges),
                                  rows=[])
        variants_out = []
        for label, scorer in scorers.items():
            refined, _ = generator.refine_policy(
                base_policy, placeholders, scorer,
                rounds=gen_params.refine_rounds, batch=gen_params.refine_batch,
                elite_fraction=gen_params.elite_fraction, config=sampler)
            seen = set()
            candidates = []
            for i in range(samples):
                sample_seed = seed * 7919 + i * 2 + (0 if label == "tanimoto"
                                                     else 1)
                result = generator.sample_scaffold_constrained(
                    refined, placeholders[i % len(placeholders)],
                    generator.SamplerConfig(
                        max_len=gen_params.max_len,
                        temperature=gen_params.temperature, seed=sample_seed,
                        max_attempts=gen_params.max_attempts,
                        fragment_budget=gen_params.fragment_budget))
                if result is None:
                    continue
                stripped = chem.strip_stereo(result.smiles)
                if stripped in seen:
                    continue
                seen.add(stripped)
                fp = morgan_fingerprint(chem.parse_smiles(stripped),
                                        fp_cfg.radius, fp_cfg.n_bits)
                candidates.append(Record(
                    id=f"g_{label}_{len(candidates):05d}", smiles=stripped,
                    fingerprint=fp))
            kept = filter_by_score(candidates, self.forest, interval)
            variant_sets = [("filtered", kept)]
            for max_n in max_neighbors:
                variant_sets.append((f"downsampled-{max_n}",
                                     downsample_by_neighbors(kept, max_n)))
            for variant_name, subset in variant_sets:
                rebuilt = pipeline._build_graph(reduced + subset, self.config,
                                                self.cover)
                version = self._register_version(rebuilt, reduced + subset)
                row = check_restoration(original, rebuilt, spec,
                                        variant=f"{label}/{variant_name}",
                                        added_count=len(subset))
                report.rows.extend(row.rows)
                variants_out.append({
                    "scoring": label, "variant": variant_name,
                    "version": version, "added": len(subset),
                    "restored": [list(e) for e in row.rows[0].restored],
                })
        with self.lock:
            self._report_counter += 1
            report_id = f"r{self._report_counter}"
            self.reports[report_id] = {
                "api_version": API_VERSION,
                "id": report_id,
                "interval": [interval.lo, interval.hi],
                "target": target,
                "table": report.to_json_dict(),
                "variants": variants_out,
                "text": report.to_text(),
            }
        return {
            "report_id": report_id,
            "variants": variants_out,
            "target_edges": [list(e) for e in spec.target_edges],
        }


class ServiceApp:
    def __init__(self, config, stage_dir, ui_dir=None):
        self.session = Session(config, stage_dir)
        self.ui_dir = ui_dir
        self.queue: queue.Queue = queue.Queue()
        self.worker = threading.Thread(target=self._work, daemon=True)
        self.worker.start()

    def _work(self):
        while True:
            job = self.queue.get()
            if job is None:
                return
            job.status = "running"
            try:
                self.session.run_job(job)
                job.status = "done"
            except Exception as exc:  # job errors surface via the API
                job.status = "failed"
                job.error = str(exc)

    def submit(self, payload) -> str:
        job_id = self.session.submit(payload)
        self.queue.put(self.session.jobs[job_id])
        return job_id

    def stop(self):
        self.queue.put(None)


def make_handler(app: ServiceApp):
    session = app.session

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def _send_json(self, payload, status=200):
            body = json.dumps(payload, sort_keys=True).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _not_found(self, message="not found"):
            self._send_json({"error": message, "api_version": API_VERSION},
                            status=404)

        def do_GET(self):
            parsed = urlparse(self.path)
            path = parsed.path
            try:
                if path == "/api/graph":
                    params = parse_qs(parsed.query)
                    version = None
                    if "version" in params:
                        try:
                            version = int(params["version"][0])
                        except ValueError:
                            self._send_json({"error": "bad version"},
                                            status=400)
                            return
                    self._send_json(session.graph_document(version))
                elif path.startswith("/api/nodes/"):
                    self._send_json(session.node_detail(path.rsplit("/", 1)[1]))
                elif path.startswith("/api/jobs/"):
                    self._send_json(session.job_document(path.rsplit("/", 1)[1]))
                elif path.startswith("/api/reports/"):
                    self._send_json(
                        session.report_document(path.rsplit("/", 1)[1]))
                elif path.startswith("/api/"):
                    self._not_found()
                else:
                    self._serve_static(path)
            except KeyError as exc:
                self._not_found(f"unknown id {exc}")

        def do_POST(self):
            parsed = urlparse(self.path)
            if parsed.path != "/api/jobs":
                self._not_found()
                return
            length = int(self.headers.get("Content-Length", "0"))
            try:
                payload = json.loads(self.rfile.read(length) or b"{}")
            except json.JSONDecodeError:
                self._send_json({"error": "invalid JSON"}, status=400)
                return
            try:
                job_id = app.submit(payload)
            except ValidationFailed as exc:
                self._send_json({"error": str(exc),
                                 "api_version": API_VERSION}, status=422)
                return
            self._send_json({"api_version": API_VERSION, "job_id": job_id},
                            status=202)

        def _serve_static(self, path):
            if app.ui_dir is None:
                body = (b"<html><body><h1>lacuna service</h1>"
                        b"<p>API under /api/; no UI bundle configured.</p>"
                        b"</body></html>")
                self.send_response(200)
                self.send_header("Content-Type", "text/html")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)
                return
            rel = path.lstrip("/") or "index.html"
            full = os.path.realpath(os.path.join(app.ui_dir, rel))
            root = os.path.realpath(app.ui_dir)
            if not full.startswith(root + os.sep) and full != root:
                self._not_found()
                return
            if os.path.isdir(full):
                full = os.path.join(full, "index.html")
            if not os.path.exists(full):
                self._not_found()
                return
            ctype = mimetypes.guess_type(full)[0] or "application/octet-stream"
            with open(full, "rb") as handle:
                body = handle.read()
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

    return Handler


def create_server(config, stage_dir, host="127.0.0.1", port=0, ui_dir=None):
    app = ServiceApp(config, stage_dir, ui_dir=ui_dir)
    server = ThreadingHTTPServer((host, port), make_handler(app))
    server.app = app
    return server


def run_server(config, stage_dir, host="127.0.0.1", port=8765, ui_dir=None):
    server = create_server(config, stage_dir, host=host, port=port,
                           ui_dir=ui_dir)
    print(f"serving on http://{host}:{server.server_address[1]}/ "
          f"(stage dir: {stage_dir})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.app.stop()
        server.server_close()

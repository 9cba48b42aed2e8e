"""Batch orchestration of the full workflow: ingest -> fingerprint ->
anomaly -> ph / mapper -> lacuna -> train -> sample -> complete -> report.

Configuration is a flat INI file with one section per stage; every stage
seed is explicit after validation.  Each stage writes its artifacts into a
stage directory and records a sha256 digest over them, so reruns with the
same config are byte-identical.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field, fields

import numpy as np

from . import anomaly, chem, completion, generator, persistence
from .dataset import Record, load_records, load_saved_records, save_records
from .fingerprint import BitFingerprint, morgan_fingerprint, pairwise_distances
from .mapper import Cover, MapperGraph, SpectralParams, build_cover, \
    build_mapper, detect_features


class ConfigInvalid(ValueError):
    pass


class MissingUpstream(RuntimeError):
    pass


class StageDirLocked(RuntimeError):
    pass


STAGES = ["ingest", "fingerprint", "anomaly", "ph", "mapper", "lacuna",
          "train", "sample", "complete", "report"]


@dataclass
class FingerprintParams:
    radius: int = 2
    n_bits: int = 2048


@dataclass
class ForestParams:
    n_trees: int = 100
    psi: int = 256  # capped at the dataset size when fitting
    seed: int = 11


@dataclass
class CoverParams:
    n_intervals: int = 30
    overlap: float = 0.5


@dataclass
class SpectralConfig:
    k: int = 2
    gamma: float = 0.01
    kmeans_restarts: int = 10
    eigen_tolerance: float = 1e-8
    eigengap_ratio: float = 20.0
    seed: int = 5


@dataclass
class PersistenceParams:
    threshold: float = 0.1
    n_cuts: int = 20
    max_degree: int = 1


@dataclass
class LacunaParams:
    edges: tuple = ()  # tuple of (u, v) node-id pairs


@dataclass
class GeneratorParams:
    order: int = 6
    seed: int = 77
    samples: int = 2000
    max_len: int = 120
    temperature: float = 1.0
    fragment_budget: int = 12
    max_attempts: int = 20
    n_scaffolds: int = 2
    scaffold_variants: int = 3
    placeholders_per_scaffold: int = 1
    refine_rounds: int = 2
    refine_batch: int = 128
    elite_fraction: float = 0.2
    elite_weight: float = 1.0
    tau: float = 0.01
    scaffold_source: str = "removed"  # removed | file
    scaffold_file: str = ""


@dataclass
class CompleteParams:
    interval: str = "auto"  # or "lo,hi"
    max_neighbors: tuple = (300, 200)


@dataclass
class PipelineConfig:
    dataset_path: str
    fingerprint: FingerprintParams = field(default_factory=FingerprintParams)
    forest: ForestParams = field(default_factory=ForestParams)
    cover: CoverParams = field(default_factory=CoverParams)
    spectral: SpectralConfig = field(default_factory=SpectralConfig)
    persistence: PersistenceParams = field(default_factory=PersistenceParams)
    lacuna: LacunaParams = field(default_factory=LacunaParams)
    generator: GeneratorParams = field(default_factory=GeneratorParams)
    complete: CompleteParams = field(default_factory=CompleteParams)

    def to_text(self) -> str:
        parser = configparser.ConfigParser()
        parser["dataset"] = {"path": self.dataset_path}
        parser["fingerprint"] = {"radius": str(self.fingerprint.radius),
                                 "n_bits": str(self.fingerprint.n_bits)}
        parser["forest"] = {"n_trees": str(self.forest.n_trees),
                            "psi": str(self.forest.psi),
                            "seed": str(self.forest.seed)}
        parser["cover"] = {"n_intervals": str(self.cover.n_intervals),
                           "overlap": repr(self.cover.overlap)}
        parser["spectral"] = {
            "k": str(self.spectral.k),
            "gamma": repr(self.spectral.gamma),
            "kmeans_restarts": str(self.spectral.kmeans_restarts),
            "eigen_tolerance": repr(self.spectral.eigen_tolerance),
            "eigengap_ratio": repr(self.spectral.eigengap_ratio),
            "seed": str(self.spectral.seed)}
        parser["persistence"] = {
            "threshold": repr(self.persistence.threshold),
            "n_cuts": str(self.persistence.n_cuts),
            "max_degree": str(self.persistence.max_degree)}
        parser["lacuna"] = {
            "edges": ", ".join(f"{u}-{v}" for u, v in self.lacuna.edges)}
        gen = self.generator
        parser["generator"] = {
            "order": str(gen.order), "seed": str(gen.seed),
            "samples": str(gen.samples), "max_len": str(gen.max_len),
            "temperature": repr(gen.temperature),
            "fragment_budget": str(gen.fragment_budget),
            "max_attempts": str(gen.max_attempts),
            "n_scaffolds": str(gen.n_scaffolds),
            "scaffold_variants": str(gen.scaffold_variants),
            "placeholders_per_scaffold": str(gen.placeholders_per_scaffold),
            "refine_rounds": str(gen.refine_rounds),
            "refine_batch": str(gen.refine_batch),
            "elite_fraction": repr(gen.elite_fraction),
            "elite_weight": repr(gen.elite_weight),
            "tau": repr(gen.tau),
            "scaffold_source": gen.scaffold_source,
            "scaffold_file": gen.scaffold_file}
        parser["complete"] = {
            "interval": self.complete.interval,
            "max_neighbors": ",".join(str(m) for m in
                                      self.complete.max_neighbors)}
        buffer = io.StringIO()
        parser.write(buffer)
        return buffer.getvalue()


def _coerce(parser, section, key, cast, default, errors):
    if not parser.has_option(section, key):
        return default
    raw = parser.get(section, key)
    try:
        return cast(raw)
    except (TypeError, ValueError):
        errors.append(f"[{section}] {key}: cannot parse {raw!r}")
        return default


def _parse_edges(raw: str) -> tuple:
    edges = []
    for piece in raw.split(","):
        piece = piece.strip()
        if not piece:
            continue
        if "-" not in piece:
            raise ValueError(f"edge {piece!r} must look like u-v")
        u, _, v = piece.partition("-")
        edges.append((u.strip(), v.strip()))
    return tuple(edges)


def validate_config(path) -> PipelineConfig:
    """Parse, fill defaults, check invariants; ConfigInvalid on violation."""
    if not os.path.exists(path):
        raise ConfigInvalid(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigInvalid(f"cannot parse config: {exc}") from exc
    errors: list[str] = []
    if not parser.has_option("dataset", "path"):
        errors.append("[dataset] path: required")
        dataset_path = ""
    else:
        dataset_path = parser.get("dataset", "path")

    config = PipelineConfig(dataset_path=dataset_path)
    fp = config.fingerprint
    fp.radius = _coerce(parser, "fingerprint", "radius", int, fp.radius, errors)
    fp.n_bits = _coerce(parser, "fingerprint", "n_bits", int, fp.n_bits, errors)
    fo = config.forest
    fo.n_trees = _coerce(parser, "forest", "n_trees", int, fo.n_trees, errors)
    fo.psi = _coerce(parser, "forest", "psi", int, fo.psi, errors)
    fo.seed = _coerce(parser, "forest", "seed", int, fo.seed, errors)
    co = config.cover
    co.n_intervals = _coerce(parser, "cover", "n_intervals", int,
                             co.n_intervals, errors)
    co.overlap = _coerce(parser, "cover", "overlap", float, co.overlap, errors)
    sp = config.spectral
    sp.k = _coerce(parser, "spectral", "k", int, sp.k, errors)
    sp.gamma = _coerce(parser, "spectral", "gamma", float, sp.gamma, errors)
    sp.kmeans_restarts = _coerce(parser, "spectral", "kmeans_restarts", int,
                                 sp.kmeans_restarts, errors)
    sp.eigen_tolerance = _coerce(parser, "spectral", "eigen_tolerance", float,
                                 sp.eigen_tolerance, errors)
    sp.eigengap_ratio = _coerce(parser, "spectral", "eigengap_ratio", float,
                                sp.eigengap_ratio, errors)
    sp.seed = _coerce(parser, "spectral", "seed", int, sp.seed, errors)
    pe = config.persistence
    pe.threshold = _coerce(parser, "persistence", "threshold", float,
                           pe.threshold, errors)
    pe.n_cuts = _coerce(parser, "persistence", "n_cuts", int, pe.n_cuts, errors)
    pe.max_degree = _coerce(parser, "persistence", "max_degree", int,
                            pe.max_degree, errors)
    if parser.has_option("lacuna", "edges"):
        try:
            config.lacuna.edges = _parse_edges(parser.get("lacuna", "edges"))
        except ValueError as exc:
            errors.append(f"[lacuna] edges: {exc}")
    gen = config.generator
    for name, cast in [("order", int), ("seed", int), ("samples", int),
                       ("max_len", int), ("temperature", float),
                       ("fragment_budget", int), ("max_attempts", int),
                       ("n_scaffolds", int), ("scaffold_variants", int),
                       ("placeholders_per_scaffold", int),
                       ("refine_rounds", int), ("refine_batch", int),
                       ("elite_fraction", float), ("elite_weight", float),
                       ("tau", float), ("scaffold_source", str),
                       ("scaffold_file", str)]:
        setattr(gen, name, _coerce(parser, "generator", name, cast,
                                   getattr(gen, name), errors))
    comp = config.complete
    comp.interval = _coerce(parser, "complete", "interval", str,
                            comp.interval, errors)
    if parser.has_option("complete", "max_neighbors"):
        raw = parser.get("complete", "max_neighbors")
        try:
            comp.max_neighbors = tuple(int(x) for x in raw.split(",") if x.strip())
        except ValueError:
            errors.append(f"[complete] max_neighbors: cannot parse {raw!r}")

    # invariants
    if fp.radius < 0:
        errors.append("[fingerprint] radius: must be >= 0")
    if fp.n_bits < 64 or fp.n_bits & (fp.n_bits - 1):
        errors.append("[fingerprint] n_bits: must be a power of two >= 64")
    if fo.n_trees < 1:
        errors.append("[forest] n_trees: must be >= 1")
    if fo.psi < 2:
        errors.append("[forest] psi: must be >= 2")
    if co.n_intervals < 1:
        errors.append("[cover] n_intervals: must be >= 1")
    if not 0.0 <= co.overlap < 1.0:
        errors.append("[cover] overlap: must be in [0, 1)")
    if sp.k < 1:
        errors.append("[spectral] k: must be >= 1")
    if sp.gamma <= 0:
        errors.append("[spectral] gamma: must be positive")
    if pe.n_cuts < 1:
        errors.append("[persistence] n_cuts: must be >= 1")
    if pe.max_degree not in (0, 1):
        errors.append("[persistence] max_degree: must be 0 or 1")
    if gen.order < 1:
        errors.append("[generator] order: must be >= 1")
    if gen.temperature <= 0:
        errors.append("[generator] temperature: must be positive")
    if not 0.0 < gen.elite_fraction <= 1.0:
        errors.append("[generator] elite_fraction: must be in (0, 1]")
    if gen.scaffold_source not in ("removed", "file"):
        errors.append("[generator] scaffold_source: must be removed or file")
    if comp.interval != "auto":
        try:
            lo, hi = (float(x) for x in comp.interval.split(","))
            if not lo < hi:
                errors.append("[complete] interval: need lo < hi")
        except ValueError:
            errors.append(f"[complete] interval: cannot parse "
                          f"{comp.interval!r} (use auto or lo,hi)")
    if errors:
        raise ConfigInvalid("; ".join(errors))
    return config


def apply_seed_overrides(config: PipelineConfig, overrides: dict):
    for stage, seed in overrides.items():
        if stage == "forest":
            config.forest.seed = seed
        elif stage == "spectral":
            config.spectral.seed = seed
        elif stage == "generator":
            config.generator.seed = seed
        else:
            raise ConfigInvalid(f"unknown seed override stage {stage!r}")


@dataclass
class StageArtifact:
    stage: str
    digest: str
    paths: list[str]


def _digest_files(paths) -> str:
    h = hashlib.sha256()
    for path in sorted(paths):
        h.update(os.path.basename(path).encode())
        h.update(b"\0")
        with open(path, "rb") as handle:
            h.update(handle.read())
        h.update(b"\0")
    return h.hexdigest()


def _finish(stage_dir, stage, filenames) -> StageArtifact:
    paths = [os.path.join(stage_dir, name) for name in filenames]
    artifact = StageArtifact(stage=stage, digest=_digest_files(paths),
                             paths=paths)
    manifest = os.path.join(stage_dir, "manifest.tsv")
    rows = {}
    if os.path.exists(manifest):
        with open(manifest) as handle:
            for line in handle:
                if line.strip():
                    name, digest, files = line.rstrip("\n").split("\t")
                    rows[name] = (digest, files)
    rows[stage] = (artifact.digest, ",".join(sorted(filenames)))
    with open(manifest, "w") as handle:
        for name in STAGES:
            if name in rows:
                handle.write(f"{name}\t{rows[name][0]}\t{rows[name][1]}\n")
    return artifact


def _require(stage_dir, *filenames):
    for name in filenames:
        if not os.path.exists(os.path.join(stage_dir, name)):
            raise MissingUpstream(f"missing upstream artifact {name}; "
                                  "run earlier stages first")


def histogram(values, n_bins: int):
    """Uniform bins over [0, 1]; counts normalized to probabilities."""
    values = list(values)
    if not values:
        raise ValueError("values must be nonempty")
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    edges = [i / n_bins for i in range(n_bins + 1)]
    counts = [0] * n_bins
    for v in values:
        idx = min(int(v * n_bins), n_bins - 1)
        idx = max(idx, 0)
        counts[idx] += 1
    total = len(values)
    return edges, [c / total for c in counts]


def _histogram_csv(values, n_bins=50) -> str:
    edges, probs = histogram(values, n_bins)
    lines = ["bin_start,bin_end,probability"]
    for i, p in enumerate(probs):
        lines.append(f"{repr(edges[i])},{repr(edges[i + 1])},{repr(p)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# artifact I/O helpers

def _write(stage_dir, name, text):
    with open(os.path.join(stage_dir, name), "w", encoding="ascii") as handle:
        handle.write(text)


def _read(stage_dir, name) -> str:
    with open(os.path.join(stage_dir, name), encoding="ascii") as handle:
        return handle.read()


def _load_fingerprints(stage_dir, config) -> dict[str, BitFingerprint]:
    out = {}
    for line in _read(stage_dir, "fingerprints.tsv").splitlines():
        if not line or line.startswith("#"):
            continue
        rec_id, hexbits = line.split("\t")
        out[rec_id] = BitFingerprint.from_hex(
            hexbits, config.fingerprint.n_bits, config.fingerprint.radius)
    return out


def _load_scores(stage_dir) -> dict[str, float]:
    out = {}
    for line in _read(stage_dir, "scores.csv").splitlines()[1:]:
        if line:
            rec_id, value = line.split(",")
            out[rec_id] = float(value)
    return out


def _forest_to_json(forest: anomaly.IsolationForest) -> str:
    def encode(node):
        if node[0] == "leaf":
            return ["leaf", node[1]]
        return ["split", node[1], node[2], encode(node[3]), encode(node[4])]

    return json.dumps({
        "psi": forest.psi, "n_trees": forest.n_trees, "seed": forest.seed,
        "width": forest.width,
        "subsamples": [s.tolist() for s in forest.subsamples],
        "trees": [encode(t) for t in forest.trees],
    }, sort_keys=True)


def _forest_from_json(text: str) -> anomaly.IsolationForest:
    def decode(node):
        if node[0] == "leaf":
            return ("leaf", node[1])
        return ("split", node[1], node[2], decode(node[3]), decode(node[4]))

    data = json.loads(text)
    return anomaly.IsolationForest(
        trees=[decode(t) for t in data["trees"]], psi=data["psi"],
        n_trees=data["n_trees"], seed=data["seed"], width=data["width"],
        subsamples=[np.array(s) for s in data["subsamples"]])


def _records_with_features(stage_dir, config, filename="records.tsv"):
    records = load_saved_records(os.path.join(stage_dir, filename))
    fps = _load_fingerprints(stage_dir, config)
    scores = _load_scores(stage_dir)
    for r in records:
        r.fingerprint = fps[r.id]
        r.lens = scores[r.id]
    return records


def _original_cover(config, scores: dict) -> Cover:
    return build_cover(list(scores.values()), config.cover.n_intervals,
                       config.cover.overlap)


def _spectral_params(config) -> SpectralParams:
    sp = config.spectral
    return SpectralParams(k=sp.k, gamma=sp.gamma,
                          kmeans_restarts=sp.kmeans_restarts,
                          eigen_tolerance=sp.eigen_tolerance,
                          seed=sp.seed, eigengap_ratio=sp.eigengap_ratio)


def _build_graph(records, config, cover) -> MapperGraph:
    from .fingerprint import unpack_bits

    features = unpack_bits([r.fingerprint for r in records])
    lens = [r.lens for r in records]
    ids = [r.id for r in records]
    return build_mapper(features, lens, ids, cover, _spectral_params(config))


# ---------------------------------------------------------------------------
# stages

def _stage_ingest(config, stage_dir) -> StageArtifact:
    records, stats = load_records(config.dataset_path)
    save_records(records, os.path.join(stage_dir, "records.tsv"))
    _write(stage_dir, "ingest_stats.json", json.dumps(
        {"read": stats.read, "parsed": stats.parsed,
         "duplicates": stats.duplicates, "errors": stats.errors},
        sort_keys=True) + "\n")
    return _finish(stage_dir, "ingest", ["records.tsv", "ingest_stats.json"])


def _stage_fingerprint(config, stage_dir) -> StageArtifact:
    _require(stage_dir, "records.tsv")
    records = load_saved_records(os.path.join(stage_dir, "records.tsv"))
    lines = ["# id\tfingerprint_hex"]
    fps = []
    for r in records:
        fp = morgan_fingerprint(chem.parse_smiles(r.smiles),
                                config.fingerprint.radius,
                                config.fingerprint.n_bits)
        fps.append(fp)
        lines.append(f"{r.id}\t{fp.to_hex()}")
    _write(stage_dir, "fingerprints.tsv", "\n".join(lines) + "\n")
    matrix = pairwise_distances(fps)
    # full matrix kept for external embedding tools (t-SNE and friends)
    _write(stage_dir, "distances.csv", matrix.to_csv([r.id for r in records]))
    upper = matrix.values[np.triu_indices(matrix.n, k=1)] if matrix.n > 1 \
        else np.zeros(0)
    if len(upper):
        _write(stage_dir, "dice_histogram.csv", _histogram_csv(upper))
    else:
        _write(stage_dir, "dice_histogram.csv",
               "bin_start,bin_end,probability\n")
    return _finish(stage_dir, "fingerprint",
                   ["fingerprints.tsv", "distances.csv", "dice_histogram.csv"])


def _stage_anomaly(config, stage_dir) -> StageArtifact:
    _require(stage_dir, "records.tsv", "fingerprints.tsv")
    records = load_saved_records(os.path.join(stage_dir, "records.tsv"))
    fps = _load_fingerprints(stage_dir, config)
    ordered = [fps[r.id] for r in records]
    psi = min(config.forest.psi, len(ordered))
    forest = anomaly.fit(ordered, n_trees=config.forest.n_trees, psi=psi,
                         seed=config.forest.seed)
    scores = anomaly.batch_scores(forest, ordered)
    lines = ["id,score"]
    for r, s in zip(records, scores):
        lines.append(f"{r.id},{repr(s)}")
    _write(stage_dir, "scores.csv", "\n".join(lines) + "\n")
    _write(stage_dir, "forest.json", _forest_to_json(forest) + "\n")
    return _finish(stage_dir, "anomaly", ["scores.csv", "forest.json"])


def _stage_ph(config, stage_dir) -> StageArtifact:
    _require(stage_dir, "records.tsv", "fingerprints.tsv")
    records = load_saved_records(os.path.join(stage_dir, "records.tsv"))
    fps = _load_fingerprints(stage_dir, config)
    matrix = pairwise_distances([fps[r.id] for r in records])
    diagram = persistence.rips_persistence(
        matrix, max_degree=config.persistence.max_degree)
    _write(stage_dir, "diagram_full.csv", diagram.to_csv())
    timed = [(chem.parse_smiles(r.smiles), r.year) for r in records
             if r.year is not None]
    if timed:
        series = persistence.cumulative_series(
            timed, n_cuts=config.persistence.n_cuts,
            radius=config.fingerprint.radius, n_bits=config.fingerprint.n_bits,
            threshold=config.persistence.threshold,
            max_degree=config.persistence.max_degree)
        _write(stage_dir, "ph_series.csv", series.to_csv())
    else:
        _write(stage_dir, "ph_series.csv",
               "cutoff,size,n_thr_h0,n_thr_h1,ratio_h0,ratio_h1,"
               "max_life_h0,max_life_h1\n")
    return _finish(stage_dir, "ph", ["diagram_full.csv", "ph_series.csv"])


def _stage_mapper(config, stage_dir) -> StageArtifact:
    _require(stage_dir, "records.tsv", "fingerprints.tsv", "scores.csv")
    records = _records_with_features(stage_dir, config)
    cover = _original_cover(config, {r.id: r.lens for r in records})
    graph = _build_graph(records, config, cover)
    _write(stage_dir, "mapper_graph.txt", graph.to_text())
    _write(stage_dir, "mapper_graph.dot", graph.to_dot())
    report = detect_features(graph)
    _write(stage_dir, "features.json",
           json.dumps(report.to_json_dict(), sort_keys=True) + "\n")
    return _finish(stage_dir, "mapper",
                   ["mapper_graph.txt", "mapper_graph.dot", "features.json"])


def _stage_lacuna(config, stage_dir) -> StageArtifact:
    _require(stage_dir, "records.tsv", "mapper_graph.txt", "scores.csv",
             "fingerprints.tsv")
    if not config.lacuna.edges:
        raise ConfigInvalid("[lacuna] edges: required for the lacuna stage")
    records = _records_with_features(stage_dir, config)
    graph = MapperGraph.from_text(_read(stage_dir, "mapper_graph.txt"))
    kept, spec = completion.carve_lacuna(graph, records,
                                         list(config.lacuna.edges))
    save_records(kept, os.path.join(stage_dir, "records_lacuna.tsv"))
    _write(stage_dir, "lacuna.json",
           json.dumps(spec.to_json_dict(), sort_keys=True) + "\n")
    return _finish(stage_dir, "lacuna", ["records_lacuna.tsv", "lacuna.json"])


def _reference_scaffolds(config, stage_dir, removed_records) -> list[str]:
    gen = config.generator
    if gen.scaffold_source == "file":
        if not gen.scaffold_file:
            raise ConfigInvalid("[generator] scaffold_file: required when "
                                "scaffold_source = file")
        with open(gen.scaffold_file, encoding="ascii") as handle:
            return [line.strip() for line in handle
                    if line.strip() and not line.startswith("#")]
    counts: dict[str, int] = {}
    for record in removed_records:
        try:
            scaffold = chem.murcko_scaffold(chem.parse_smiles(record.smiles))
        except (chem.NoRings, chem.SmilesError, ValueError):
            continue
        counts[scaffold.smiles] = counts.get(scaffold.smiles, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [s for s, _ in ranked[:gen.n_scaffolds]]


def _placeholder_scaffolds(config, references: list[str]) -> list[str]:
    gen = config.generator
    out = []
    for si, smiles in enumerate(references):
        scaffold = chem.murcko_scaffold(chem.parse_smiles(smiles))
        for variant in range(gen.scaffold_variants):
            count = min(gen.placeholders_per_scaffold,
                        len(scaffold.placeholder_positions))
            if count == 0:
                continue
            seed = gen.seed * 1000003 + si * 101 + variant
            out.append(chem.insert_placeholders(scaffold, count, seed))
    return sorted(set(out))


def _edge_sides(graph, edges):
    """Split each edge into its lower-interval (u) and upper-interval (v)
    endpoint; the generation interval spans the gap between them."""
    u_nodes, v_nodes = [], []
    for a, b in edges:
        na, nb = graph.node(a), graph.node(b)
        if na.interval_index == nb.interval_index:
            raise ConfigInvalid(f"edge {a}-{b} joins nodes from the same "
                                "interval; pick a cross-interval edge")
        lo_node, hi_node = (na, nb) if na.interval_index < nb.interval_index \
            else (nb, na)
        u_nodes.append(lo_node)
        v_nodes.append(hi_node)
    return u_nodes, v_nodes


def _target_interval(config, stage_dir):
    graph = MapperGraph.from_text(_read(stage_dir, "mapper_graph.txt"))
    scores = _load_scores(stage_dir)
    if config.complete.interval != "auto":
        lo, hi = (float(x) for x in config.complete.interval.split(","))
        return completion.ScoreInterval(lo, hi), (lo + hi) / 2.0
    u_nodes, v_nodes = _edge_sides(graph, config.lacuna.edges)
    return completion.compute_target_interval(u_nodes, v_nodes, scores)


def _stage_train(config, stage_dir) -> StageArtifact:
    _require(stage_dir, "records_lacuna.tsv", "lacuna.json", "forest.json",
             "mapper_graph.txt", "scores.csv")
    lacuna_records = load_saved_records(
        os.path.join(stage_dir, "records_lacuna.tsv"))
    spec = completion.LacunaSpec.from_json_dict(
        json.loads(_read(stage_dir, "lacuna.json")))
    all_records = load_saved_records(os.path.join(stage_dir, "records.tsv"))
    removed = [r for r in all_records if r.id in spec.removed_ids]
    corpus = [r.smiles for r in lacuna_records]
    base = generator.train_policy(corpus, order=config.generator.order)
    _write(stage_dir, "policy_base.txt", base.to_text())

    references = _reference_scaffolds(config, stage_dir, removed)
    if not references:
        raise ConfigInvalid("no reference scaffolds available")
    _write(stage_dir, "scaffolds.txt", "\n".join(references) + "\n")
    placeholders = _placeholder_scaffolds(config, references)
    _write(stage_dir, "placeholder_scaffolds.txt",
           "\n".join(placeholders) + "\n")

    gen = config.generator
    sampler = generator.SamplerConfig(
        max_len=gen.max_len, temperature=gen.temperature, seed=gen.seed,
        max_attempts=gen.max_attempts, fragment_budget=gen.fragment_budget,
        elite_weight=gen.elite_weight)
    query_fps = [morgan_fingerprint(chem.parse_smiles(s),
                                    config.fingerprint.radius,
                                    config.fingerprint.n_bits)
                 for s in references]
    tanimoto = generator.TanimotoScoring(
        query_fps=query_fps, radius=config.fingerprint.radius,
        n_bits=config.fingerprint.n_bits)
    forest = _forest_from_json(_read(stage_dir, "forest.json"))
    _, target = _target_interval(config, stage_dir)
    lens = generator.LensScoring(
        forest=forest, target=target, tau=gen.tau,
        radius=config.fingerprint.radius, n_bits=config.fingerprint.n_bits)

    history_lines = ["scoring,round,mean_elite_score"]
    for label, scoring in [("tanimoto", tanimoto), ("lens", lens)]:
        refined, history = generator.refine_policy(
            base, placeholders, scoring, rounds=gen.refine_rounds,
            batch=gen.refine_batch, elite_fraction=gen.elite_fraction,
            config=sampler)
        _write(stage_dir, f"policy_{label}.txt", refined.to_text())
        for i, value in enumerate(history):
            history_lines.append(f"{label},{i},{repr(value)}")
    _write(stage_dir, "refine_history.csv", "\n".join(history_lines) + "\n")
    return _finish(stage_dir, "train",
                   ["policy_base.txt", "policy_tanimoto.txt",
                    "policy_lens.txt", "scaffolds.txt",
                    "placeholder_scaffolds.txt", "refine_history.csv"])


def _stage_sample(config, stage_dir) -> StageArtifact:
    _require(stage_dir, "policy_tanimoto.txt", "policy_lens.txt",
             "placeholder_scaffolds.txt")
    placeholders = [line for line in
                    _read(stage_dir, "placeholder_scaffolds.txt").splitlines()
                    if line]
    gen = config.generator
    filenames = []
    for label in ("tanimoto", "lens"):
        policy = generator.GenerationPolicy.from_text(
            _read(stage_dir, f"policy_{label}.txt"))
        seen = set()
        rows = []
        for i in range(gen.samples):
            seed = gen.seed * 7919 + i * 2 + (0 if label == "tanimoto" else 1)
            scaffold = placeholders[i % len(placeholders)]
            result = generator.sample_scaffold_constrained(
                policy, scaffold,
                generator.SamplerConfig(
                    max_len=gen.max_len, temperature=gen.temperature,
                    seed=seed, max_attempts=gen.max_attempts,
                    fragment_budget=gen.fragment_budget))
            if result is None:
                continue
            stripped = chem.strip_stereo(result.smiles)
            if stripped in seen:
                continue
            seen.add(stripped)
            rows.append(stripped)
        name = f"candidates_{label}.tsv"
        _write(stage_dir, name,
               "# smiles\n" + "\n".join(rows) + ("\n" if rows else ""))
        filenames.append(name)
    return _finish(stage_dir, "sample", filenames)


def _candidate_records(stage_dir, config, label) -> list[Record]:
    rows = [line for line in
            _read(stage_dir, f"candidates_{label}.tsv").splitlines()
            if line and not line.startswith("#")]
    records = []
    for i, smiles in enumerate(rows):
        fp = morgan_fingerprint(chem.parse_smiles(smiles),
                                config.fingerprint.radius,
                                config.fingerprint.n_bits)
        records.append(Record(id=f"g_{label}_{i:05d}", smiles=smiles,
                              fingerprint=fp))
    return records


def _stage_complete(config, stage_dir) -> StageArtifact:
    _require(stage_dir, "records_lacuna.tsv", "lacuna.json", "forest.json",
             "candidates_tanimoto.tsv", "candidates_lens.tsv",
             "mapper_graph.txt", "scores.csv")
    original = MapperGraph.from_text(_read(stage_dir, "mapper_graph.txt"))
    spec = completion.LacunaSpec.from_json_dict(
        json.loads(_read(stage_dir, "lacuna.json")))
    forest = _forest_from_json(_read(stage_dir, "forest.json"))
    interval, target = _target_interval(config, stage_dir)
    scores = _load_scores(stage_dir)
    cover = _original_cover(config, scores)
    lacuna_records = _records_with_features(stage_dir, config,
                                            "records_lacuna.tsv")
    report = completion.CompletionReport(
        target_edges=list(spec.target_edges), rows=[])
    filenames = []
    meta = {"interval": [interval.lo, interval.hi], "target": target,
            "variants": []}
    for label in ("tanimoto", "lens"):
        candidates = _candidate_records(stage_dir, config, label)
        kept = completion.filter_by_score(candidates, forest, interval)
        variants = [("filtered", kept)]
        for max_n in config.complete.max_neighbors:
            variants.append((f"downsampled-{max_n}",
                             completion.downsample_by_neighbors(kept, max_n)))
        for variant_name, subset in variants:
            tag = f"{label}/{variant_name}"
            combined = lacuna_records + subset
            rebuilt = _build_graph(combined, config, cover)
            graph_name = f"mapper_{label}_{variant_name}.txt"
            _write(stage_dir, graph_name, rebuilt.to_text())
            filenames.append(graph_name)
            row_report = completion.check_restoration(
                original, rebuilt, spec, variant=tag,
                added_count=len(subset))
            report.rows.extend(row_report.rows)
            kept_name = f"candidates_kept_{label}_{variant_name}.tsv"
            _write(stage_dir, kept_name, "# id\tsmiles\tscore\n" + "".join(
                f"{c.id}\t{c.smiles}\t{repr(c.lens)}\n" for c in subset))
            filenames.append(kept_name)
            meta["variants"].append({"scoring": label,
                                     "variant": variant_name,
                                     "added": len(subset)})
    _write(stage_dir, "completion.json",
           json.dumps({"meta": meta, "report": report.to_json_dict()},
                      sort_keys=True) + "\n")
    filenames.append("completion.json")
    return _finish(stage_dir, "complete", filenames)


def _stage_report(config, stage_dir) -> StageArtifact:
    _require(stage_dir, "completion.json", "lacuna.json")
    payload = json.loads(_read(stage_dir, "completion.json"))
    report_data = payload["report"]
    spec = completion.LacunaSpec.from_json_dict(
        json.loads(_read(stage_dir, "lacuna.json")))
    report = completion.CompletionReport(
        target_edges=[tuple(e) for e in report_data["target_edges"]],
        rows=[completion.RestorationRow(
            variant=r["variant"], added_count=r["added_count"],
            restored=[tuple(e) for e in r["restored"]],
            unmatched_nodes=r["unmatched_nodes"])
            for r in report_data["rows"]])
    lines = ["generative completion results",
             f"target edges: " + ", ".join(f"({u}, {v})"
                                           for u, v in report.target_edges),
             f"removed records: {len(spec.removed_ids)}",
             "", report.to_text()]
    files = ["report.txt", "report.json"]
    _write(stage_dir, "report.txt", "\n".join(lines))
    _write(stage_dir, "report.json", json.dumps(
        {"removed": len(spec.removed_ids), "interval": payload["meta"],
         "table": report.to_json_dict()}, sort_keys=True) + "\n")
    for label in ("tanimoto", "lens"):
        name = f"dice_histogram_{label}.csv"
        candidate_file = f"candidates_{label}.tsv"
        if os.path.exists(os.path.join(stage_dir, candidate_file)):
            candidates = _candidate_records(stage_dir, config, label)
            if len(candidates) > 1:
                matrix = pairwise_distances(
                    [c.fingerprint for c in candidates])
                upper = matrix.values[np.triu_indices(matrix.n, k=1)]
                _write(stage_dir, name, _histogram_csv(upper))
                files.append(name)
    return _finish(stage_dir, "report", files)


_STAGE_FUNCS = {
    "ingest": _stage_ingest,
    "fingerprint": _stage_fingerprint,
    "anomaly": _stage_anomaly,
    "ph": _stage_ph,
    "mapper": _stage_mapper,
    "lacuna": _stage_lacuna,
    "train": _stage_train,
    "sample": _stage_sample,
    "complete": _stage_complete,
    "report": _stage_report,
}


def run_stage(config: PipelineConfig, stage: str, stage_dir) -> StageArtifact:
    if stage not in _STAGE_FUNCS:
        raise ConfigInvalid(f"unknown stage {stage!r}")
    os.makedirs(stage_dir, exist_ok=True)
    return _STAGE_FUNCS[stage](config, stage_dir)


class stage_lock:
    """One process owns a stage directory at a time."""

    def __init__(self, stage_dir):
        self.path = os.path.join(stage_dir, ".lock")

    def __enter__(self):
        os.makedirs(os.path.dirname(self.path), exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise StageDirLocked(f"stage directory locked by {self.path}")
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        try:
            os.remove(self.path)
        except FileNotFoundError:
            pass
        return False

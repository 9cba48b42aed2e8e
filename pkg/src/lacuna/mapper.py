"""Mapper graph construction: interval cover of the lens range, per-level-set
spectral clustering, nerve graph, and lacuna-feature detection.

Level sets use closed intervals, so a record sitting on a shared boundary
joins both neighbouring level sets.  Everything is seeded; the serialized
graph is byte-stable for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DegenerateRange(ValueError):
    pass


class EmptyDataset(ValueError):
    pass


def _mix_seed(seed: int, index: int) -> int:
    x = (seed * 0x9E3779B97F4A7C15 + index) & ((1 << 64) - 1)
    x ^= x >> 33
    x = (x * 0xFF51AFD7ED558CCD) & ((1 << 64) - 1)
    x ^= x >> 33
    return x


@dataclass
class Cover:
    n_intervals: int
    overlap: float
    lo: float
    hi: float
    intervals: list[tuple[float, float]]

    def containing(self, value: float) -> list[int]:
        return [i for i, (s, e) in enumerate(self.intervals) if s <= value <= e]


def build_cover(lens_values, n_intervals: int, overlap: float) -> Cover:
    """Uniform overlapping interval cover of [min(lens), max(lens)].

    Interval length L = (hi - lo) / (n - (n-1)*overlap); interval i starts
    at lo + i*L*(1-overlap).  A degenerate range collapses to a single
    point interval.
    """
    values = list(lens_values)
    if not values:
        raise EmptyDataset("no lens values")
    if n_intervals < 1:
        raise ValueError("n_intervals must be >= 1")
    if not 0.0 <= overlap < 1.0:
        raise ValueError("overlap must be in [0, 1)")
    lo, hi = float(min(values)), float(max(values))
    if hi == lo:
        return Cover(n_intervals=1, overlap=overlap, lo=lo, hi=hi,
                     intervals=[(lo, hi)])
    length = (hi - lo) / (n_intervals - (n_intervals - 1) * overlap)
    intervals = []
    for i in range(n_intervals):
        start = lo + i * length * (1.0 - overlap)
        end = start + length
        if i == n_intervals - 1:
            end = hi
        intervals.append((start, min(end, hi)))
    return Cover(n_intervals=n_intervals, overlap=overlap, lo=lo, hi=hi,
                 intervals=intervals)


@dataclass
class SpectralParams:
    k: int = 2
    gamma: float = 0.01
    kmeans_restarts: int = 10
    eigen_tolerance: float = 1e-8
    seed: int = 0
    eigengap_ratio: float = 20.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.eigengap_ratio < 1:
            raise ValueError("eigengap_ratio must be >= 1")


def _kmeans(rows: np.ndarray, k: int, restarts: int, seed: int):
    """Seeded farthest-point k-means; returns the lowest-inertia labels."""
    n = rows.shape[0]
    best = None
    for restart in range(restarts):
        rng = np.random.Generator(np.random.PCG64(_mix_seed(seed, restart)))
        centers = [int(rng.integers(n))]
        dist2 = ((rows - rows[centers[0]]) ** 2).sum(axis=1)
        while len(centers) < k:
            nxt = int(np.argmax(dist2))
            centers.append(nxt)
            dist2 = np.minimum(dist2, ((rows - rows[nxt]) ** 2).sum(axis=1))
        centroids = rows[centers].copy()
        labels = np.zeros(n, dtype=int)
        for _ in range(100):
            d2 = ((rows[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
            new_labels = np.argmin(d2, axis=1)
            if (new_labels == labels).all() and _ > 0:
                break
            labels = new_labels
            for c in range(k):
                members = rows[labels == c]
                if len(members):
                    centroids[c] = members.mean(axis=0)
        inertia = float(((rows - centroids[labels]) ** 2).sum())
        if best is None or inertia < best[0] - 1e-12:
            best = (inertia, labels.copy())
    return best[1]


def rbf_laplacian(features: np.ndarray, gamma: float) -> np.ndarray:
    """Symmetric-normalized Laplacian of the rbf affinity graph."""
    features = np.asarray(features, dtype=float)
    n = features.shape[0]
    sq = ((features[:, None, :] - features[None, :, :]) ** 2).sum(axis=2)
    affinity = np.exp(-gamma * sq)
    degree = affinity.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(degree)
    laplacian = np.eye(n) - inv_sqrt[:, None] * affinity * inv_sqrt[None, :]
    return (laplacian + laplacian.T) / 2.0


def _effective_k(eigvals: np.ndarray, k: int, ratio: float) -> int:
    """Cluster count supported by the spectrum, capped at k.

    Near-zero eigenvalues signal disconnected affinity blocks; otherwise a
    large relative gap after the j-th eigenvalue supports j clusters.  A
    level set whose spectrum shows neither stays a single cluster (the
    remaining requested clusters come back empty and are dropped).
    """
    zeros = int((eigvals < 1e-9).sum())
    if zeros >= 2:
        return min(k, zeros)
    for j in range(k, 1, -1):
        if j < len(eigvals) and eigvals[j] / max(eigvals[j - 1], 1e-15) >= ratio:
            return j
    return 1


def spectral_cluster(features: np.ndarray, params: SpectralParams) -> np.ndarray:
    """Normalized spectral clustering on a feature matrix.

    Affinity exp(-gamma * ||x_i - x_j||^2); symmetric-normalized Laplacian;
    k-means on the row-normalized bottom eigenvectors.  params.k is an
    upper bound: the eigengap decides how many clusters the level set
    actually supports.  Fewer points than clusters means every point gets
    its own label.  Labels are compacted in order of first appearance, so
    output is deterministic for a seed.
    """
    features = np.asarray(features, dtype=float)
    n = features.shape[0]
    if n == 0:
        return np.zeros(0, dtype=int)
    if n == 1:
        return np.zeros(1, dtype=int)
    if n < params.k:
        return np.arange(n, dtype=int)
    sq = ((features[:, None, :] - features[None, :, :]) ** 2).sum(axis=2)
    if not sq.any():
        # all points identical: a single cluster, the rest empty and dropped
        return np.zeros(n, dtype=int)
    laplacian = rbf_laplacian(features, params.gamma)
    eigvals, eigvecs = np.linalg.eigh(laplacian)
    eigvals = np.clip(eigvals, 0.0, None)
    k_eff = _effective_k(eigvals, params.k, params.eigengap_ratio)
    if k_eff == 1:
        return np.zeros(n, dtype=int)
    embedding = eigvecs[:, :k_eff]
    norms = np.linalg.norm(embedding, axis=1)
    norms[norms < 1e-12] = 1.0
    embedding = embedding / norms[:, None]
    labels = _kmeans(embedding, k_eff, params.kmeans_restarts, params.seed)
    remap = {}
    out = np.zeros(n, dtype=int)
    for i, label in enumerate(labels):
        if label not in remap:
            remap[label] = len(remap)
        out[i] = remap[label]
    return out


@dataclass
class MapperNode:
    id: str
    interval_index: int
    cluster_index: int
    members: set
    mean_lens: float

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass
class MapperGraph:
    nodes: list[MapperNode]
    edges: list[tuple[str, str, int]]
    cover: Cover | None = None

    def node(self, node_id: str) -> MapperNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def has_edge(self, u: str, v: str) -> bool:
        return any((a == u and b == v) or (a == v and b == u)
                   for a, b, _ in self.edges)

    def adjacency(self) -> dict[str, set[str]]:
        adj = {n.id: set() for n in self.nodes}
        for a, b, _ in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return adj

    def to_text(self) -> str:
        lines = ["# mapper graph", f"nodes {len(self.nodes)}",
                 f"edges {len(self.edges)}"]
        for n in self.nodes:
            members = " ".join(sorted(str(m) for m in n.members))
            lines.append(f"node {n.id} {n.interval_index} {n.cluster_index} "
                         f"{n.size} {repr(n.mean_lens)} {members}")
        for a, b, w in self.edges:
            lines.append(f"edge {a} {b} {w}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MapperGraph":
        nodes = []
        edges = []
        for line in text.splitlines():
            parts = line.split()
            if not parts or parts[0] == "#":
                continue
            if parts[0] == "node":
                nodes.append(MapperNode(
                    id=parts[1], interval_index=int(parts[2]),
                    cluster_index=int(parts[3]),
                    members=set(parts[6:6 + int(parts[4])]),
                    mean_lens=float(parts[5])))
            elif parts[0] == "edge":
                edges.append((parts[1], parts[2], int(parts[3])))
        return cls(nodes=nodes, edges=edges)

    def to_dot(self) -> str:
        lens_values = [n.mean_lens for n in self.nodes]
        lo = min(lens_values) if lens_values else 0.0
        hi = max(lens_values) if lens_values else 1.0
        span = (hi - lo) or 1.0
        lines = ["graph mapper {", "  node [style=filled];"]
        for n in self.nodes:
            # blue (least anomalous, high lens) to red (most anomalous, low)
            t = (n.mean_lens - lo) / span
            hue = 0.667 * t
            lines.append(
                f'  "{n.id}" [label="{n.id}\\n{n.size}" '
                f'fillcolor="{hue:.3f} 0.6 0.95"];')
        for a, b, w in self.edges:
            lines.append(f'  "{a}" -- "{b}" [label="{w}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_mapper(features: np.ndarray, lens_values, ids,
                 cover: Cover, params: SpectralParams) -> MapperGraph:
    """Cluster every level set and link clusters that share records."""
    features = np.asarray(features, dtype=float)
    n = features.shape[0]
    if n == 0:
        raise EmptyDataset("no records")
    lens_values = list(lens_values)
    if len(lens_values) != n or len(ids) != n:
        raise ValueError("features, lens values and ids must align")
    nodes = []
    for interval_index, (start, end) in enumerate(cover.intervals):
        level = [i for i in range(n) if start <= lens_values[i] <= end]
        if not level:
            continue
        level_params = SpectralParams(
            k=params.k, gamma=params.gamma,
            kmeans_restarts=params.kmeans_restarts,
            eigen_tolerance=params.eigen_tolerance,
            seed=_mix_seed(params.seed, interval_index),
            eigengap_ratio=params.eigengap_ratio)
        labels = spectral_cluster(features[level], level_params)
        for cluster_index in range(int(labels.max()) + 1):
            member_rows = [level[i] for i in range(len(level))
                           if labels[i] == cluster_index]
            if not member_rows:
                continue
            members = {ids[i] for i in member_rows}
            mean_lens = float(np.mean([lens_values[i] for i in member_rows]))
            nodes.append(MapperNode(
                id=f"n{interval_index}_{cluster_index}",
                interval_index=interval_index, cluster_index=cluster_index,
                members=members, mean_lens=mean_lens))
    edges = []
    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            if nodes[i].interval_index == nodes[j].interval_index:
                continue
            common = len(nodes[i].members & nodes[j].members)
            if common:
                edges.append((nodes[i].id, nodes[j].id, common))
    return MapperGraph(nodes=nodes, edges=edges, cover=cover)


@dataclass
class FeatureReport:
    components: int
    component_members: list[list[str]]
    loops: int
    loop_representatives: list[list[str]]
    flares: list[list[str]]

    def to_json_dict(self) -> dict:
        return {
            "components": self.components,
            "component_members": self.component_members,
            "loops": self.loops,
            "loop_representatives": self.loop_representatives,
            "flares": self.flares,
        }


def detect_features(g: MapperGraph) -> FeatureReport:
    """Connected components, independent loops, and flares of a graph.

    Loop count is the cycle rank E - V + C with one representative per
    independent loop from a spanning-forest cycle basis.  A flare is a
    maximal chain of two or more degree <= 2 nodes that ends in a degree-1
    node and hangs off a node of degree >= 3.
    """
    adj = g.adjacency()
    ids = sorted(adj)
    comp_of = {}
    components = []
    for root in ids:
        if root in comp_of:
            continue
        queue = [root]
        comp_of[root] = len(components)
        members = [root]
        while queue:
            node = queue.pop(0)
            for nbr in sorted(adj[node]):
                if nbr not in comp_of:
                    comp_of[nbr] = len(components)
                    members.append(nbr)
                    queue.append(nbr)
        components.append(sorted(members))

    # spanning forest for the fundamental cycle basis
    parent = {}
    depth = {}
    tree_edges = set()
    for root in ids:
        if root in parent:
            continue
        parent[root] = None
        depth[root] = 0
        queue = [root]
        while queue:
            node = queue.pop(0)
            for nbr in sorted(adj[node]):
                if nbr not in parent:
                    parent[nbr] = node
                    depth[nbr] = depth[node] + 1
                    tree_edges.add(frozenset((node, nbr)))
                    queue.append(nbr)
    loop_reps = []
    for a, b, _ in g.edges:
        if frozenset((a, b)) in tree_edges:
            continue
        pa, pb = a, b
        path_a, path_b = [pa], [pb]
        while depth[pa] > depth[pb]:
            pa = parent[pa]
            path_a.append(pa)
        while depth[pb] > depth[pa]:
            pb = parent[pb]
            path_b.append(pb)
        while pa != pb:
            pa, pb = parent[pa], parent[pb]
            path_a.append(pa)
            path_b.append(pb)
        cycle = path_a + path_b[:-1][::-1]
        loop_reps.append(cycle)

    n_edges = len(g.edges)
    n_nodes = len(g.nodes)
    loops = n_edges - n_nodes + len(components)

    degree = {node: len(adj[node]) for node in adj}
    flares = []
    seen_chains = set()
    for leaf in ids:
        if degree[leaf] != 1:
            continue
        chain = [leaf]
        prev, node = leaf, next(iter(adj[leaf]))
        while degree[node] <= 2:
            chain.append(node)
            nxt = [x for x in adj[node] if x != prev]
            if not nxt:
                break
            prev, node = node, nxt[0]
        anchored = degree[node] >= 3
        if anchored and len(chain) >= 2:
            key = frozenset(chain)
            if key not in seen_chains:
                seen_chains.add(key)
                flares.append(chain)
    return FeatureReport(components=len(components),
                         component_members=components,
                         loops=loops, loop_representatives=loop_reps,
                         flares=flares)

"""Vietoris-Rips persistent homology of degree 0 and 1 over distance
matrices, lifespan statistics, and cumulative time-series analysis.

Degree 0 comes from Kruskal-style union-find (deaths are the MST edge
weights); degree 1 from GF(2) reduction of the triangle boundary columns
streamed in filtration order.  Simplices are ordered by (diameter,
dimension, lexicographic vertices) and zero-lifespan pairs are dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fingerprint import DistanceMatrix, morgan_fingerprint, pairwise_distances

INF = math.inf


class InvalidMatrix(ValueError):
    pass


class NoFinitePairs(ValueError):
    pass


class EmptyDataset(ValueError):
    pass


@dataclass(frozen=True)
class PersistencePair:
    degree: int
    birth: float
    death: float

    @property
    def lifespan(self) -> float:
        return self.death - self.birth

    @property
    def finite(self) -> bool:
        return math.isfinite(self.death)


@dataclass
class PersistenceDiagram:
    pairs: list[PersistencePair]
    max_degree: int
    max_scale: float

    def of_degree(self, degree: int) -> list[PersistencePair]:
        return [p for p in self.pairs if p.degree == degree]

    def to_csv(self) -> str:
        lines = ["degree,birth,death"]
        for p in self.pairs:
            death = "inf" if not p.finite else repr(p.death)
            lines.append(f"{p.degree},{repr(p.birth)},{death}")
        return "\n".join(lines) + "\n"


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if ra > rb:
            ra, rb = rb, ra
        self.parent[rb] = ra
        return True


def _validate(d: DistanceMatrix):
    values = d.values
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise InvalidMatrix("matrix must be square")
    if (values < 0).any():
        raise InvalidMatrix("negative entries")
    if not np.array_equal(values, values.T):
        raise InvalidMatrix("matrix must be symmetric")
    if np.diagonal(values).any():
        raise InvalidMatrix("diagonal must be zero")


def rips_persistence(d: DistanceMatrix, max_degree: int = 1,
                     max_scale: float | None = None) -> PersistenceDiagram:
    """Persistence diagram of the Vietoris-Rips filtration of `d`.

    Only degrees 0 and 1 are computed.  `max_scale` defaults to the largest
    pairwise distance, which bounds triangle enumeration at O(n^3).
    """
    _validate(d)
    if max_degree not in (0, 1):
        raise ValueError("max_degree must be 0 or 1")
    n = d.n
    values = d.values
    if max_scale is None:
        max_scale = float(values.max()) if n > 1 else 0.0

    edges = [(float(values[i, j]), i, j)
             for i in range(n) for j in range(i + 1, n)
             if values[i, j] <= max_scale]
    edges.sort()

    pairs: list[PersistencePair] = []
    uf = _UnionFind(n)
    mst_edges = set()
    for eidx, (w, i, j) in enumerate(edges):
        if uf.union(i, j):
            mst_edges.add(eidx)
            if w > 0:
                pairs.append(PersistencePair(0, 0.0, w))
    components = len({uf.find(i) for i in range(n)})
    for _ in range(components):
        pairs.append(PersistencePair(0, 0.0, INF))

    if max_degree >= 1 and n >= 3:
        triangles = []
        for i in range(n):
            for j in range(i + 1, n):
                dij = values[i, j]
                if dij > max_scale:
                    continue
                for k in range(j + 1, n):
                    diam = max(dij, values[i, k], values[j, k])
                    if diam <= max_scale:
                        triangles.append((float(diam), i, j, k))
        triangles.sort()

        edge_index = {(i, j): e for e, (_, i, j) in enumerate(edges)}
        pivots: dict[int, int] = {}  # low edge index -> reduced column bitmask
        killed: set[int] = set()
        for diam, i, j, k in triangles:
            col = ((1 << edge_index[(i, j)])
                   | (1 << edge_index[(i, k)])
                   | (1 << edge_index[(j, k)]))
            while col:
                low = col.bit_length() - 1
                if low in pivots:
                    col ^= pivots[low]
                else:
                    pivots[low] = col
                    killed.add(low)
                    birth = edges[low][0]
                    if diam > birth:
                        pairs.append(PersistencePair(1, birth, float(diam)))
                    break
        for eidx, (w, i, j) in enumerate(edges):
            if eidx not in mst_edges and eidx not in killed:
                pairs.append(PersistencePair(1, w, INF))

    pairs.sort(key=lambda p: (p.degree, p.birth, p.death))
    return PersistenceDiagram(pairs=pairs, max_degree=max_degree,
                              max_scale=max_scale)


def count_above_threshold(diag: PersistenceDiagram, degree: int,
                          threshold: float) -> int:
    """Finite pairs of `degree` with lifespan strictly above `threshold`."""
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    return sum(1 for p in diag.of_degree(degree)
               if p.finite and p.lifespan > threshold)


def max_lifespan(diag: PersistenceDiagram, degree: int) -> float:
    finite = [p.lifespan for p in diag.of_degree(degree) if p.finite]
    if not finite:
        raise NoFinitePairs(f"no finite degree-{degree} pairs")
    return max(finite)


@dataclass
class CumulativeSeries:
    cutoffs: list[float]
    sizes: list[int]
    diagrams: list[PersistenceDiagram]
    threshold: float
    counts: dict[int, list[int]] = field(default_factory=dict)
    ratios: dict[int, list[float]] = field(default_factory=dict)
    max_lifespans: dict[int, list[float]] = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = ["cutoff,size,n_thr_h0,n_thr_h1,ratio_h0,ratio_h1,"
                 "max_life_h0,max_life_h1"]
        for i, t in enumerate(self.cutoffs):
            lines.append(",".join([
                repr(float(t)), str(self.sizes[i]),
                str(self.counts[0][i]), str(self.counts[1][i]),
                repr(self.ratios[0][i]), repr(self.ratios[1][i]),
                repr(self.max_lifespans[0][i]), repr(self.max_lifespans[1][i]),
            ]))
        return "\n".join(lines) + "\n"


def cumulative_series(records, n_cuts: int, radius: int = 2,
                      n_bits: int = 2048, threshold: float = 0.1,
                      max_degree: int = 1) -> CumulativeSeries:
    """Per-cutoff persistence statistics over a growing point cloud.

    `records` is a list of (Molecule, time) pairs.  Cutoffs are evenly
    spaced over the time range; the cloud at cutoff T holds all records
    with time <= T.  Emits the threshold count, count/size ratio, and
    maximum lifespan per degree (0.0 when a degree has no finite pairs).
    """
    if not records:
        raise EmptyDataset("no records")
    if n_cuts < 1:
        raise ValueError("n_cuts must be >= 1")
    times = [t for _, t in records]
    t_lo, t_hi = min(times), max(times)
    if n_cuts == 1:
        cutoffs = [float(t_hi)]
    else:
        cutoffs = [t_lo + i * (t_hi - t_lo) / (n_cuts - 1) for i in range(n_cuts)]
    fps = [morgan_fingerprint(mol, radius=radius, n_bits=n_bits)
           for mol, _ in records]
    order = sorted(range(len(records)), key=lambda i: times[i])
    series = CumulativeSeries(cutoffs=[], sizes=[], diagrams=[],
                              threshold=threshold,
                              counts={0: [], 1: []}, ratios={0: [], 1: []},
                              max_lifespans={0: [], 1: []})
    for cutoff in cutoffs:
        members = [i for i in order if times[i] <= cutoff + 1e-12]
        if not members:
            continue
        matrix = pairwise_distances([fps[i] for i in members])
        diagram = rips_persistence(matrix, max_degree=max_degree)
        series.cutoffs.append(float(cutoff))
        series.sizes.append(len(members))
        series.diagrams.append(diagram)
        for degree in (0, 1):
            count = count_above_threshold(diagram, degree, threshold)
            series.counts[degree].append(count)
            series.ratios[degree].append(count / len(members))
            try:
                life = max_lifespan(diagram, degree)
            except NoFinitePairs:
                life = 0.0
            series.max_lifespans[degree].append(life)
    return series

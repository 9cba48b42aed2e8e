"""Lacuna surgery and repair verification.

Remove the record intersection behind chosen Mapper edges, filter generated
candidates into the vacated lens interval, thin dense candidate clumps by
neighbor counts, and report which target edges a rebuilt graph restores.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .anomaly import IsolationForest, batch_scores
from .dataset import Record
from .fingerprint import dice_distance
from .mapper import MapperGraph, MapperNode


class NoSuchEdge(ValueError):
    pass


class EmptyOverlapRegion(ValueError):
    pass


@dataclass
class LacunaSpec:
    target_edges: list[tuple[str, str]]
    removed_ids: set

    def to_json_dict(self) -> dict:
        return {"target_edges": [list(e) for e in self.target_edges],
                "removed_ids": sorted(self.removed_ids)}

    @classmethod
    def from_json_dict(cls, data) -> "LacunaSpec":
        return cls(target_edges=[tuple(e) for e in data["target_edges"]],
                   removed_ids=set(data["removed_ids"]))


@dataclass
class ScoreInterval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise EmptyOverlapRegion(f"need lo < hi, got ({self.lo}, {self.hi})")

    def contains(self, value: float) -> bool:
        return self.lo < value < self.hi


def remove_edge_intersection(g: MapperGraph, records: list[Record],
                             u: str, v: str) -> tuple[list[Record], LacunaSpec]:
    """Delete the records shared by nodes u and v from the dataset."""
    if not g.has_edge(u, v):
        raise NoSuchEdge(f"no edge between {u} and {v}")
    removed = g.node(u).members & g.node(v).members
    kept = [r for r in records if r.id not in removed]
    return kept, LacunaSpec(target_edges=[(u, v)], removed_ids=set(removed))


def carve_lacuna(g: MapperGraph, records: list[Record],
                 edges: list[tuple[str, str]]) -> tuple[list[Record], LacunaSpec]:
    """Remove the member intersections of several edges at once."""
    removed: set = set()
    for u, v in edges:
        if not g.has_edge(u, v):
            raise NoSuchEdge(f"no edge between {u} and {v}")
        removed |= g.node(u).members & g.node(v).members
    kept = [r for r in records if r.id not in removed]
    return kept, LacunaSpec(target_edges=list(edges), removed_ids=removed)


def compute_target_interval(u_nodes: list[MapperNode], v_nodes: list[MapperNode],
                            lens_by_id: dict) -> tuple[ScoreInterval, float]:
    """Lens interval between the u-side maximum and the v-side minimum.

    hi is the highest lens among u-node members, lo the lowest among
    v-node members; the generation target is their midpoint.
    """
    if not u_nodes or not v_nodes:
        raise ValueError("node lists must be nonempty")
    u_values = [lens_by_id[m] for node in u_nodes for m in node.members]
    v_values = [lens_by_id[m] for node in v_nodes for m in node.members]
    if not u_values or not v_values:
        raise ValueError("node member sets must be nonempty")
    hi = max(u_values)
    lo = min(v_values)
    if lo >= hi:
        raise EmptyOverlapRegion(f"v minimum {lo} >= u maximum {hi}")
    return ScoreInterval(lo=lo, hi=hi), (lo + hi) / 2.0


def filter_by_score(candidates: list[Record], forest: IsolationForest,
                    interval: ScoreInterval) -> list[Record]:
    """Keep candidates whose forest score lies strictly inside the interval.

    Scores are written onto the records; input order is preserved.
    """
    for c in candidates:
        if c.fingerprint is None:
            raise ValueError(f"candidate {c.id} has no fingerprint")
    scores = batch_scores(forest, [c.fingerprint for c in candidates])
    kept = []
    for record, value in zip(candidates, scores):
        record.lens = value
        if interval.contains(value):
            kept.append(record)
    return kept


def downsample_by_neighbors(candidates: list[Record], max_neighbors: int,
                            dist_range: tuple[float, float] = (0.0, 0.6)
                            ) -> list[Record]:
    """Drop candidates with more than max_neighbors others nearby.

    The neighbor count of a candidate is the number of *other* candidates
    at Dice distance within dist_range (inclusive), computed once on the
    input set.
    """
    lo, hi = dist_range
    n = len(candidates)
    counts = [0] * n
    for i in range(n):
        for j in range(i + 1, n):
            d = dice_distance(candidates[i].fingerprint,
                              candidates[j].fingerprint)
            if lo <= d <= hi:
                counts[i] += 1
                counts[j] += 1
    return [c for c, k in zip(candidates, counts) if k <= max_neighbors]


@dataclass
class RestorationRow:
    variant: str
    added_count: int
    restored: list[tuple[str, str]]
    unmatched_nodes: list[str] = field(default_factory=list)


@dataclass
class CompletionReport:
    target_edges: list[tuple[str, str]]
    rows: list[RestorationRow] = field(default_factory=list)

    def restored_for(self, variant: str) -> list[tuple[str, str]]:
        for row in self.rows:
            if row.variant == variant:
                return row.restored
        raise KeyError(variant)

    def to_text(self) -> str:
        header = f"{'variant':24s} {'restored links':34s} {'new molecules':>13s}"
        lines = [header, "-" * len(header)]
        for row in self.rows:
            links = ", ".join(f"({u}, {v})" for u, v in row.restored) or "-"
            lines.append(f"{row.variant:24s} {links:34s} {row.added_count:>13d}")
        return "\n".join(lines) + "\n"

    def to_json_dict(self) -> dict:
        return {
            "target_edges": [list(e) for e in self.target_edges],
            "rows": [{
                "variant": r.variant,
                "added_count": r.added_count,
                "restored": [list(e) for e in r.restored],
                "unmatched_nodes": r.unmatched_nodes,
            } for r in self.rows],
        }


def match_node(original: MapperNode, rebuilt: MapperGraph,
               threshold: float = 0.5) -> MapperNode | None:
    """Successor of a node across a rebuild: same interval, best Jaccard."""
    best = None
    best_score = 0.0
    for node in rebuilt.nodes:
        if node.interval_index != original.interval_index:
            continue
        inter = len(original.members & node.members)
        union = len(original.members | node.members)
        if union == 0:
            continue
        jaccard = inter / union
        if jaccard > best_score:
            best_score = jaccard
            best = node
    if best is not None and best_score >= threshold:
        return best
    return None


def check_restoration(original: MapperGraph, rebuilt: MapperGraph,
                      spec: LacunaSpec, variant: str = "",
                      added_count: int = 0) -> CompletionReport:
    """Which target edges exist again between matched successor nodes."""
    restored = []
    unmatched: list[str] = []
    for u, v in spec.target_edges:
        nu = match_node(original.node(u), rebuilt)
        nv = match_node(original.node(v), rebuilt)
        if nu is None:
            unmatched.append(u)
        if nv is None:
            unmatched.append(v)
        if nu is not None and nv is not None and rebuilt.has_edge(nu.id, nv.id):
            restored.append((u, v))
    row = RestorationRow(variant=variant, added_count=added_count,
                         restored=restored, unmatched_nodes=sorted(set(unmatched)))
    return CompletionReport(target_edges=list(spec.target_edges), rows=[row])

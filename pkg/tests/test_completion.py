import numpy as np
import pytest

from lacuna.anomaly import fit
from lacuna.completion import (
    CompletionReport,
    EmptyOverlapRegion,
    LacunaSpec,
    NoSuchEdge,
    RestorationRow,
    ScoreInterval,
    carve_lacuna,
    check_restoration,
    compute_target_interval,
    downsample_by_neighbors,
    filter_by_score,
    match_node,
    remove_edge_intersection,
)
from lacuna.dataset import Record
from lacuna.fingerprint import BitFingerprint, dice_distance
from lacuna.mapper import MapperGraph, MapperNode


def fp_from_bits(on, n_bits=256):
    words = np.zeros(n_bits // 64, dtype="<u8")
    for bit in on:
        words[bit // 64] |= np.uint64(1 << (bit % 64))
    return BitFingerprint(bits=words, n_bits=n_bits, radius=0)


def small_graph():
    nodes = [
        MapperNode(id="u", interval_index=0, cluster_index=0,
                   members={"a", "b", "c", "d", "e", "f", "g"}, mean_lens=0.2),
        MapperNode(id="v", interval_index=1, cluster_index=0,
                   members={"d", "e", "f", "g", "h", "i"}, mean_lens=0.3),
        MapperNode(id="w", interval_index=2, cluster_index=0,
                   members={"h", "i", "j"}, mean_lens=0.4),
    ]
    edges = [("u", "v", 4), ("v", "w", 2)]
    return MapperGraph(nodes=nodes, edges=edges)


def records_named(*ids):
    return [Record(id=i, smiles="C") for i in ids]


def test_remove_edge_intersection():
    g = small_graph()
    records = records_named(*"abcdefghij")
    kept, spec = remove_edge_intersection(g, records, "u", "v")
    assert spec.removed_ids == {"d", "e", "f", "g"}
    assert len(kept) + len(spec.removed_ids) == len(records)
    assert {r.id for r in kept} == {"a", "b", "c", "h", "i", "j"}
    assert spec.target_edges == [("u", "v")]


def test_remove_edge_missing():
    g = small_graph()
    with pytest.raises(NoSuchEdge):
        remove_edge_intersection(g, records_named("a"), "u", "w")


def test_carve_lacuna_union():
    g = small_graph()
    records = records_named(*"abcdefghij")
    kept, spec = carve_lacuna(g, records, [("u", "v"), ("v", "w")])
    assert spec.removed_ids == {"d", "e", "f", "g", "h", "i"}
    assert len(kept) + len(spec.removed_ids) == len(records)
    round_trip = LacunaSpec.from_json_dict(spec.to_json_dict())
    assert round_trip.removed_ids == spec.removed_ids
    assert round_trip.target_edges == spec.target_edges


def test_compute_target_interval_paper_values():
    u = [MapperNode(id="u1", interval_index=0, cluster_index=0,
                    members={"a"}, mean_lens=0.0),
         MapperNode(id="u2", interval_index=0, cluster_index=1,
                    members={"b"}, mean_lens=0.0)]
    v = [MapperNode(id="v1", interval_index=1, cluster_index=0,
                    members={"c"}, mean_lens=0.0),
         MapperNode(id="v2", interval_index=1, cluster_index=1,
                    members={"d"}, mean_lens=0.0)]
    lens = {"a": 0.1758, "b": 0.151, "c": 0.1707, "d": 0.19}
    interval, target = compute_target_interval(u, v, lens)
    assert interval.lo == pytest.approx(0.1707)
    assert interval.hi == pytest.approx(0.1758)
    assert target == pytest.approx(0.17325)


def test_compute_target_interval_degenerate():
    u = [MapperNode(id="u", interval_index=0, cluster_index=0,
                    members={"a"}, mean_lens=0.0)]
    v = [MapperNode(id="v", interval_index=1, cluster_index=0,
                    members={"b"}, mean_lens=0.0)]
    with pytest.raises(EmptyOverlapRegion):
        compute_target_interval(u, v, {"a": 0.2, "b": 0.2})
    interval, target = compute_target_interval(u, v, {"a": 0.2, "b": 0.1})
    assert (interval.lo, interval.hi) == (0.1, 0.2)
    assert target == pytest.approx(0.15)


def test_score_interval_validation():
    with pytest.raises(EmptyOverlapRegion):
        ScoreInterval(0.2, 0.2)
    assert ScoreInterval(0.1, 0.2).contains(0.15)
    assert not ScoreInterval(0.1, 0.2).contains(0.1)  # open interval
    assert not ScoreInterval(0.1, 0.2).contains(0.2)


def forest_and_candidates(rng, n=40):
    base = list(range(30))
    training = []
    for _ in range(60):
        bits = base + [int(b) + 40 for b in rng.choice(60, size=8, replace=False)]
        training.append(fp_from_bits(bits))
    forest = fit(training, n_trees=50, psi=32, seed=5)
    candidates = []
    for i in range(n):
        bits = base + [int(b) + 40 for b in rng.choice(120, size=10, replace=False)]
        candidates.append(Record(id=f"c{i}", smiles="C",
                                 fingerprint=fp_from_bits(bits)))
    return forest, candidates


def test_filter_by_score_matches_direct_predicate():
    rng = np.random.default_rng(1)
    forest, candidates = forest_and_candidates(rng)
    from lacuna.anomaly import score

    values = [score(forest, c.fingerprint) for c in candidates]
    lo, hi = np.quantile(values, 0.25), np.quantile(values, 0.75)
    interval = ScoreInterval(float(lo), float(hi))
    kept = filter_by_score(candidates, forest, interval)
    expected = [c for c, s in zip(candidates, values) if lo < s < hi]
    assert [c.id for c in kept] == [c.id for c in expected]
    assert filter_by_score([], forest, interval) == []
    for c in kept:
        assert interval.lo < c.lens < interval.hi


def test_filter_boundary_excluded():
    rng = np.random.default_rng(2)
    forest, candidates = forest_and_candidates(rng, n=5)
    from lacuna.anomaly import score

    value = score(forest, candidates[0].fingerprint)
    interval = ScoreInterval(value, value + 0.1)
    kept = filter_by_score(candidates[:1], forest, interval)
    assert kept == []


def test_downsample_all_far_apart():
    candidates = [Record(id=f"c{i}", smiles="C",
                         fingerprint=fp_from_bits([i * 3, i * 3 + 1, 100 + i]))
                  for i in range(8)]
    for a in candidates:
        for b in candidates:
            if a is not b:
                assert dice_distance(a.fingerprint, b.fingerprint) > 0.6
    assert downsample_by_neighbors(candidates, 0) == candidates


def test_downsample_threshold_semantics():
    identical = [Record(id=f"c{i}", smiles="C", fingerprint=fp_from_bits([1, 2]))
                 for i in range(301)]
    kept = downsample_by_neighbors(identical, 300)
    assert len(kept) == 301  # everyone has exactly 300 neighbors
    one_more = identical + [Record(id="c301", smiles="C",
                                   fingerprint=fp_from_bits([1, 2]))]
    assert downsample_by_neighbors(one_more, 300) == []


def test_downsample_matches_quadratic_oracle():
    rng = np.random.default_rng(3)
    candidates = []
    for i in range(30):
        if i < 20:
            bits = [0, 1, 2, 3] + [int(b) for b in rng.choice(12, size=2)]
        else:
            bits = [int(b) + 50 for b in rng.choice(100, size=6, replace=False)]
        candidates.append(Record(id=f"c{i}", smiles="C",
                                 fingerprint=fp_from_bits(sorted(set(bits)))))
    kept = downsample_by_neighbors(candidates, 5)
    counts = []
    for i, a in enumerate(candidates):
        count = sum(1 for j, b in enumerate(candidates) if i != j
                    and 0.0 <= dice_distance(a.fingerprint, b.fingerprint) <= 0.6)
        counts.append(count)
    expected = [c for c, k in zip(candidates, counts) if k <= 5]
    assert [c.id for c in kept] == [c.id for c in expected]
    # idempotent when recomputed counts stay under the cap
    again = downsample_by_neighbors(kept, 5)
    assert again == kept


def test_check_restoration_identical_graph():
    g = small_graph()
    spec = LacunaSpec(target_edges=[("u", "v"), ("v", "w")],
                      removed_ids=set())
    report = check_restoration(g, g, spec, variant="identity", added_count=0)
    assert report.restored_for("identity") == [("u", "v"), ("v", "w")]
    assert report.rows[0].unmatched_nodes == []


def test_check_restoration_post_surgery_zero():
    g = small_graph()
    records = records_named(*"abcdefghij")
    kept, spec = remove_edge_intersection(g, records, "u", "v")
    post = MapperGraph(nodes=[
        MapperNode(id="u'", interval_index=0, cluster_index=0,
                   members={"a", "b", "c"}, mean_lens=0.2),
        MapperNode(id="v'", interval_index=1, cluster_index=0,
                   members={"h", "i"}, mean_lens=0.3),
        MapperNode(id="w'", interval_index=2, cluster_index=0,
                   members={"h", "i", "j"}, mean_lens=0.4),
    ], edges=[("v'", "w'", 2)])
    report = check_restoration(g, post, spec)
    assert report.rows[0].restored == []


def test_match_node_threshold():
    g = small_graph()
    far = MapperGraph(nodes=[
        MapperNode(id="x", interval_index=0, cluster_index=0,
                   members={"z1", "z2", "z3"}, mean_lens=0.0)], edges=[])
    assert match_node(g.node("u"), far) is None
    near = MapperGraph(nodes=[
        MapperNode(id="y", interval_index=0, cluster_index=0,
                   members={"a", "b", "c", "d", "e"}, mean_lens=0.0)], edges=[])
    matched = match_node(g.node("u"), near)
    assert matched is not None and matched.id == "y"


def test_report_rendering():
    report = CompletionReport(target_edges=[("u", "v")], rows=[])
    report.rows.append(RestorationRow(variant="filtered", added_count=12,
                                      restored=[("u", "v")]))
    text = report.to_text()
    assert "filtered" in text and "(u, v)" in text and "12" in text
    data = report.to_json_dict()
    assert data["rows"][0]["restored"] == [["u", "v"]]

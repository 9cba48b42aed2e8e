import math

import numpy as np
import pytest

from lacuna.mapper import (
    Cover,
    EmptyDataset,
    FeatureReport,
    MapperGraph,
    MapperNode,
    SpectralParams,
    build_cover,
    build_mapper,
    detect_features,
    rbf_laplacian,
    spectral_cluster,
)


def two_blob_features(rng, n_per=20, n_bits=200, cross=60):
    """Two far-apart bit-vector blobs: within-blob Hamming <= 2."""
    rows = []
    base_a = np.zeros(n_bits)
    base_a[:40] = 1.0
    base_b = np.zeros(n_bits)
    base_b[40:40 + cross] = 1.0
    for base in (base_a, base_b):
        for _ in range(n_per):
            row = base.copy()
            for _ in range(int(rng.integers(0, 2))):
                flip = int(rng.integers(n_bits - 50, n_bits))
                row[flip] = 1.0 - row[flip]
            rows.append(row)
    return np.array(rows)


def test_cover_two_intervals():
    cover = build_cover([0.0, 1.0], n_intervals=2, overlap=0.5)
    (s0, e0), (s1, e1) = cover.intervals
    assert s0 == pytest.approx(0.0)
    assert e0 == pytest.approx(2 / 3)
    assert s1 == pytest.approx(1 / 3)
    assert e1 == pytest.approx(1.0)


def test_cover_single_interval():
    cover = build_cover([0.0, 1.0], n_intervals=1, overlap=0.5)
    assert cover.intervals == [(0.0, 1.0)]


def test_cover_thirty_intervals_formula():
    cover = build_cover([0.0, 1.0], n_intervals=30, overlap=0.5)
    length = 1.0 / 15.5
    assert len(cover.intervals) == 30
    assert abs(cover.intervals[-1][1] - 1.0) < 1e-12
    for i in range(29):
        overlap_len = cover.intervals[i][1] - cover.intervals[i + 1][0]
        assert abs(overlap_len - length / 2) < 1e-12
    # interior points covered by at most two intervals
    for x in np.linspace(0.001, 0.999, 97):
        hits = cover.containing(float(x))
        assert 1 <= len(hits) <= 2


def test_cover_degenerate_range():
    cover = build_cover([0.5, 0.5, 0.5], n_intervals=5, overlap=0.5)
    assert cover.intervals == [(0.5, 0.5)]
    assert cover.containing(0.5) == [0]


def test_cover_validation():
    with pytest.raises(ValueError):
        build_cover([0.0, 1.0], n_intervals=2, overlap=1.0)
    with pytest.raises(EmptyDataset):
        build_cover([], n_intervals=2, overlap=0.5)


def test_spectral_two_blobs():
    rng = np.random.default_rng(3)
    features = two_blob_features(rng)
    labels = spectral_cluster(features, SpectralParams(k=2, gamma=0.2, seed=1))
    assert set(labels[:20]) != set(labels[20:])
    assert len(set(labels[:20].tolist())) == 1
    assert len(set(labels[20:].tolist())) == 1


def test_spectral_eigengap_two_blobs():
    rng = np.random.default_rng(4)
    features = two_blob_features(rng)
    eigvals = np.linalg.eigvalsh(rbf_laplacian(features, 0.2))
    assert eigvals[2] / max(eigvals[1], 1e-15) >= 10


def test_spectral_single_point():
    labels = spectral_cluster(np.zeros((1, 4)), SpectralParams(k=2, seed=0))
    assert labels.tolist() == [0]


def test_spectral_identical_points():
    features = np.ones((10, 16))
    labels = spectral_cluster(features, SpectralParams(k=2, seed=0))
    assert labels.tolist() == [0] * 10


def test_spectral_fewer_points_than_k():
    labels = spectral_cluster(np.eye(2), SpectralParams(k=3, seed=0))
    assert labels.tolist() == [0, 1]


def noisy_circle(rng, n=200, sigma=0.05):
    angles = rng.uniform(0, 2 * math.pi, size=n)
    radii = 1.0 + rng.normal(0, sigma, size=n)
    return np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)


def test_mapper_circle_loop():
    """Classic Mapper circle: one loop, one component, most seeds."""
    good = 0
    for seed in range(20):
        rng = np.random.default_rng(9000 + seed)
        pts = noisy_circle(rng)
        lens = pts[:, 0]
        ids = [f"p{i}" for i in range(len(pts))]
        cover = build_cover(lens, n_intervals=8, overlap=0.5)
        params = SpectralParams(k=2, gamma=5.0, seed=seed)
        graph = build_mapper(pts, lens, ids, cover, params)
        report = detect_features(graph)
        if report.loops == 1 and report.components == 1:
            good += 1
    assert good >= 18


def test_mapper_identical_lens():
    rng = np.random.default_rng(5)
    pts = rng.random((10, 3))
    lens = [0.4] * 10
    ids = [str(i) for i in range(10)]
    cover = build_cover(lens, n_intervals=4, overlap=0.5)
    graph = build_mapper(pts, lens, ids, cover, SpectralParams(k=2, seed=0))
    # single point-interval cover: every record in one interval, no edges
    assert all(n.interval_index == 0 for n in graph.nodes)
    assert graph.edges == []


def test_mapper_deterministic():
    rng = np.random.default_rng(6)
    pts = noisy_circle(rng, n=80)
    lens = pts[:, 0]
    ids = [f"p{i}" for i in range(len(pts))]
    cover = build_cover(lens, n_intervals=6, overlap=0.5)
    params = SpectralParams(k=2, gamma=1.0, seed=11)
    g1 = build_mapper(pts, lens, ids, cover, params)
    g2 = build_mapper(pts, lens, ids, cover, params)
    assert g1.to_text() == g2.to_text()


def test_mapper_nerve_correctness():
    rng = np.random.default_rng(7)
    pts = noisy_circle(rng, n=120)
    lens = pts[:, 0]
    ids = [f"p{i}" for i in range(len(pts))]
    cover = build_cover(lens, n_intervals=8, overlap=0.5)
    graph = build_mapper(pts, lens, ids, cover, SpectralParams(k=2, gamma=1.0, seed=2))
    by_id = {n.id: n for n in graph.nodes}
    for a, b, w in graph.edges:
        inter = by_id[a].members & by_id[b].members
        assert len(inter) == w > 0
    for i, u in enumerate(graph.nodes):
        for v in graph.nodes[i + 1:]:
            if u.members & v.members:
                assert graph.has_edge(u.id, v.id)
    # every record appears in at least one node
    covered = set()
    for n in graph.nodes:
        covered |= n.members
    assert covered == set(ids)


def test_mapper_graph_roundtrip():
    rng = np.random.default_rng(8)
    pts = noisy_circle(rng, n=60)
    lens = pts[:, 0]
    ids = [f"p{i}" for i in range(len(pts))]
    cover = build_cover(lens, n_intervals=5, overlap=0.5)
    graph = build_mapper(pts, lens, ids, cover, SpectralParams(k=2, gamma=1.0, seed=3))
    back = MapperGraph.from_text(graph.to_text())
    assert back.to_text() == graph.to_text()
    assert graph.to_dot().startswith("graph mapper {")


def make_graph(edges, n_nodes=None):
    names = sorted({x for e in edges for x in e}) if edges else []
    if n_nodes is not None:
        names = [f"x{i}" for i in range(n_nodes)]
    nodes = [MapperNode(id=name, interval_index=0, cluster_index=i,
                        members={name}, mean_lens=0.0)
             for i, name in enumerate(names)]
    return MapperGraph(nodes=nodes, edges=[(a, b, 1) for a, b in edges])


def test_detect_features_triangle():
    report = detect_features(make_graph([("a", "b"), ("b", "c"), ("a", "c")]))
    assert report.components == 1
    assert report.loops == 1
    assert len(report.loop_representatives) == 1
    assert sorted(report.loop_representatives[0]) == ["a", "b", "c"]
    assert report.flares == []


def test_detect_features_path():
    report = detect_features(make_graph([("a", "b"), ("b", "c"), ("c", "d")]))
    assert report.components == 1
    assert report.loops == 0
    assert report.flares == []


def test_detect_features_star_with_tail():
    edges = [("hub", "leaf1"), ("hub", "leaf2"),
             ("hub", "t1"), ("t1", "t2"), ("t2", "t3")]
    report = detect_features(make_graph(edges))
    assert report.loops == 0
    assert len(report.flares) == 1
    assert report.flares[0] == ["t3", "t2", "t1"]


def test_cycle_rank_identity_random_graphs():
    rng = np.random.default_rng(10)
    for _ in range(20):
        n = int(rng.integers(3, 12))
        edges = set()
        for _ in range(int(rng.integers(0, n * 2))):
            a, b = rng.integers(0, n, size=2)
            if a != b:
                edges.add((f"x{min(a,b)}", f"x{max(a,b)}"))
        graph = make_graph(sorted(edges), n_nodes=n)
        report = detect_features(graph)
        assert report.loops == len(edges) - n + report.components
        assert report.loops == len(report.loop_representatives)


def test_build_mapper_empty():
    with pytest.raises(EmptyDataset):
        build_mapper(np.zeros((0, 2)), [], [], Cover(1, 0.5, 0, 1, [(0, 1)]),
                     SpectralParams())

"""Isolation Forest over fingerprint bit vectors.

The decision value is 0.5 - 2^(-E[h]/c(psi)), so lower values mean more
anomalous points and everything lands in (-0.5, 0.5].  The forest doubles
as the Mapper filter function and as the Lens scoring signal for the
generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fingerprint import BitFingerprint, WidthMismatch, unpack_bits


class DegenerateData(ValueError):
    """All points identical: nothing to split on."""


def _mix_seed(seed: int, index: int) -> int:
    x = (seed * 0x9E3779B97F4A7C15 + index) & ((1 << 64) - 1)
    x ^= x >> 33
    x = (x * 0xFF51AFD7ED558CCD) & ((1 << 64) - 1)
    x ^= x >> 33
    return x


def average_path_length(n: int) -> float:
    """c(n): expected unsuccessful-search path length in a BST of n points."""
    if n <= 1:
        return 0.0
    harmonic = sum(1.0 / k for k in range(1, n))
    return 2.0 * harmonic - 2.0 * (n - 1) / n


# tree nodes: ("split", feature, threshold, left, right) | ("leaf", size)

def _build_tree(x: np.ndarray, rng: np.random.Generator, depth: int,
                depth_cap: int):
    n = x.shape[0]
    if n <= 1 or depth >= depth_cap:
        return ("leaf", n)
    lo = x.min(axis=0)
    hi = x.max(axis=0)
    splittable = np.flatnonzero(hi > lo)
    if splittable.size == 0:
        return ("leaf", n)
    feature = int(splittable[rng.integers(splittable.size)])
    threshold = float(rng.uniform(lo[feature], hi[feature]))
    mask = x[:, feature] < threshold
    left = _build_tree(x[mask], rng, depth + 1, depth_cap)
    right = _build_tree(x[~mask], rng, depth + 1, depth_cap)
    return ("split", feature, threshold, left, right)


def _path_length(tree, row: np.ndarray) -> float:
    depth = 0
    node = tree
    while node[0] == "split":
        _, feature, threshold, left, right = node
        node = left if row[feature] < threshold else right
        depth += 1
    return depth + average_path_length(node[1])


@dataclass
class IsolationForest:
    trees: list = field(repr=False)
    psi: int
    n_trees: int
    seed: int
    width: int
    subsamples: list = field(repr=False)  # per-tree training indices

    def decision_value(self, row: np.ndarray) -> float:
        mean_path = sum(_path_length(t, row) for t in self.trees) / len(self.trees)
        score = 2.0 ** (-mean_path / average_path_length(self.psi))
        return 0.5 - score


def fit(points: list[BitFingerprint], n_trees: int = 100,
        psi: int | None = None, seed: int = 0) -> IsolationForest:
    """Build a seeded forest of isolation trees on random subsamples.

    At each node a uniformly random non-constant feature is chosen and the
    threshold is uniform in (min, max); for bit features that separates the
    zeros from the ones.  Deterministic given the seed.
    """
    if len(points) < 2:
        raise ValueError("need at least two points")
    x = unpack_bits(points)
    n = x.shape[0]
    if psi is None:
        psi = min(256, n)
    if psi > n:
        raise ValueError("psi cannot exceed the number of points")
    if psi < 2:
        raise ValueError("psi must be at least 2")
    if (x == x[0]).all():
        raise DegenerateData("all points identical, no splittable feature")
    depth_cap = math.ceil(math.log2(psi))
    trees = []
    subsamples = []
    for i in range(n_trees):
        # separate streams so a tree is a pure function of (seed, i, members)
        sub_rng = np.random.Generator(np.random.PCG64(_mix_seed(seed, 2 * i)))
        idx = sub_rng.choice(n, size=psi, replace=False)
        subsamples.append(np.sort(idx))
        tree_rng = np.random.Generator(np.random.PCG64(_mix_seed(seed, 2 * i + 1)))
        trees.append(_build_tree(x[idx], tree_rng, 0, depth_cap))
    return IsolationForest(trees=trees, psi=psi, n_trees=n_trees, seed=seed,
                           width=points[0].n_bits, subsamples=subsamples)


def rebuild_tree(forest: IsolationForest, tree_index: int,
                 points: list[BitFingerprint], members: np.ndarray):
    """Rebuild one tree from an explicit subsample membership.

    With the same (seed, tree_index) and the same member multiset the
    result is structurally identical regardless of dataset ordering.
    """
    x = unpack_bits([points[j] for j in members])
    depth_cap = math.ceil(math.log2(forest.psi))
    tree_rng = np.random.Generator(
        np.random.PCG64(_mix_seed(forest.seed, 2 * tree_index + 1)))
    return _build_tree(x, tree_rng, 0, depth_cap)


def score(forest: IsolationForest, x: BitFingerprint) -> float:
    """Decision value of a single point; lower = more anomalous."""
    if x.n_bits != forest.width:
        raise WidthMismatch(f"width {x.n_bits} != training width {forest.width}")
    row = unpack_bits([x])[0]
    return forest.decision_value(row)


def batch_scores(forest: IsolationForest, points: list[BitFingerprint]) -> list[float]:
    return [score(forest, p) for p in points]

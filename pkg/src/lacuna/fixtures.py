"""Synthetic datasets with known topology, used by tests and demos.

The square-lacuna dataset holds two structural families of sulfonium
cations built on distinct reference scaffolds (triaryl with a biphenyl
marker vs trithienyl with a bithiophene marker).  Members are the scaffold
decorated at randomly chosen ring positions, exactly the mechanism the
scaffold-constrained generator uses, so generated candidates live on the
same structural manifold as the data.  Decoration rarity drives the
isolation-forest lens apart; the Mapper graph forms two parallel interval
chains, one per family, and removing one rung of each chain creates the
four-node square lacuna that generative completion repairs.
"""

from __future__ import annotations

import random

from .chem import insert_placeholders, murcko_scaffold, parse_smiles
from .dataset import Record

COMMON_SUBSTITUENTS = ["C", "CC", "F", "Cl", "OC"]
RARE_SUBSTITUENTS = [
    "Br", "I", "C#N", "C(F)(F)F", "N(C)C", "SC", "C=C", "OCC", "C(C)C",
    "CCC", "COC", "CCF", "CCCl", "OC(C)C", "C#CC", "CC=C", "C(C)(C)C",
    "SCC", "CBr", "OC(F)F",
]

FAMILY_SCAFFOLDS = {
    "A": "[S+](c1ccccc1)(c2ccccc2)c3ccc(-c4ccccc4)cc3",
    "B": "[S+](c1cccs1)(c2cccs2)c3cc(-c4cccs4)cs3",
}


def _decorated(scaffold, n_subs: int, rarity: float,
               rng: random.Random) -> str:
    if n_subs == 0:
        return scaffold.smiles
    placed = insert_placeholders(scaffold, n_subs,
                                 seed=rng.randrange(1 << 30))
    out = placed
    for _ in range(n_subs):
        pool = RARE_SUBSTITUENTS if rng.random() < rarity \
            else COMMON_SUBSTITUENTS
        out = out.replace("(*)", f"({rng.choice(pool)})", 1)
    return out


def square_lacuna_records(seed: int = 0, n_per_family: int = 220
                          ) -> list[Record]:
    """Two-family sulfonium dataset with a decoration-rarity gradient."""
    rng = random.Random(seed)
    scaffolds = {family: murcko_scaffold(parse_smiles(smiles))
                 for family, smiles in FAMILY_SCAFFOLDS.items()}
    records = []
    seen = set()
    for family in ("A", "B"):
        made = 0
        attempts = 0
        while made < n_per_family:
            attempts += 1
            if attempts > 100 * n_per_family:
                raise RuntimeError("cannot generate enough unique molecules")
            rarity = made / max(n_per_family - 1, 1)
            weights = [max(1.0 - rarity, 0.05), 1.0, 0.3 + rarity,
                       rarity * rarity]
            n_subs = rng.choices((0, 1, 2, 3), weights=weights)[0]
            smiles = _decorated(scaffolds[family], n_subs, rarity, rng)
            if smiles in seen:
                continue
            parse_smiles(smiles)
            seen.add(smiles)
            year = 1976.0 + 43.0 * made / max(n_per_family - 1, 1)
            records.append(Record(id=f"{family}{made:04d}", smiles=smiles,
                                  year=round(year, 2)))
            made += 1
    return records


def write_square_lacuna_dataset(path, seed: int = 0,
                                n_per_family: int = 300) -> int:
    records = square_lacuna_records(seed=seed, n_per_family=n_per_family)
    with open(path, "w", encoding="ascii") as handle:
        handle.write("# smiles\tyear\tid\n")
        for r in records:
            handle.write(f"{r.smiles}\t{r.year}\t{r.id}\n")
    return len(records)


def square_lacuna_config_text(dataset_path, fixture_seed: int = 0,
                              samples: int = 350) -> str:
    """Pipeline configuration tuned for the square-lacuna fixture."""
    return f"""[dataset]
path = {dataset_path}

[forest]
seed = {11 + fixture_seed}

[cover]
n_intervals = 8
overlap = 0.2

[spectral]
k = 2
gamma = 0.5
seed = {5 + fixture_seed}

[generator]
seed = {77 + fixture_seed}
samples = {samples}
refine_rounds = 2
refine_batch = 64
n_scaffolds = 2
scaffold_variants = 5
placeholders_per_scaffold = 2

[complete]
interval = auto
max_neighbors = 60,35
"""


def choose_square_edges(graph, min_node: int = 60, max_fraction: float = 0.32,
                        min_shared: int = 5):
    """The two chain rungs to sever: a pair of disjoint edges across one
    interval gap, preferring large nodes with moderate intersections.

    Returns a list of two (u, v) pairs, or None when the graph offers no
    suitable square.
    """
    nodes = {n.id: n for n in graph.nodes}
    by_gap: dict[int, list] = {}
    for u, v, w in graph.edges:
        iu, iv = nodes[u].interval_index, nodes[v].interval_index
        if abs(iu - iv) == 1:
            by_gap.setdefault(min(iu, iv), []).append((u, v, w))
    best = None
    for gap, edges in by_gap.items():
        if len(edges) != 2:
            continue
        touched = {x for u, v, _ in edges for x in (u, v)}
        if len(touched) != 4:
            continue
        min_size = min(nodes[x].size for x in touched)
        if min_size < min_node:
            continue
        if any(w < min_shared
               or max(w / nodes[u].size, w / nodes[v].size) > max_fraction
               for u, v, w in edges):
            continue
        if best is None or min_size > best[0]:
            best = (min_size, [(u, v) for u, v, _ in edges])
    return best[1] if best else None

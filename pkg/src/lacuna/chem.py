"""SMILES parsing, writing, tokenizing, and scaffold extraction.

The dialect covers the organic subset, bracket atoms with charges and
explicit hydrogen counts, ring-bond digits (including %nn), branches,
dot-separated components, and aromatic lowercase atoms.  Chirality and
cis/trans markers are accepted on input and carry no semantics here;
``strip_stereo`` deletes them at the token level.  The ``(*)`` placeholder
is a tokenizer-level construct used by scaffold-constrained generation and
is not a parseable atom.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

PLACEHOLDER = "(*)"

ORGANIC_SUBSET = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"}
AROMATIC_ORGANIC = {"b", "c", "n", "o", "p", "s"}
AROMATIC_BRACKET = {"b", "c", "n", "o", "p", "s", "se", "as"}

# Standard valence lists used for implicit hydrogens and free valence.
VALENCES = {
    "B": (3,),
    "C": (4,),
    "N": (3, 5),
    "O": (2,),
    "P": (3, 5),
    "S": (2, 4, 6),
    "F": (1,),
    "Cl": (1,),
    "Br": (1,),
    "I": (1,),
}

ATOMIC_NUMBER = {
    "H": 1, "He": 2, "Li": 3, "Be": 4, "B": 5, "C": 6, "N": 7, "O": 8,
    "F": 9, "Ne": 10, "Na": 11, "Mg": 12, "Al": 13, "Si": 14, "P": 15,
    "S": 16, "Cl": 17, "Ar": 18, "K": 19, "Ca": 20, "Sc": 21, "Ti": 22,
    "V": 23, "Cr": 24, "Mn": 25, "Fe": 26, "Co": 27, "Ni": 28, "Cu": 29,
    "Zn": 30, "Ga": 31, "Ge": 32, "As": 33, "Se": 34, "Br": 35, "Kr": 36,
    "Rb": 37, "Sr": 38, "Y": 39, "Zr": 40, "Nb": 41, "Mo": 42, "Tc": 43,
    "Ru": 44, "Rh": 45, "Pd": 46, "Ag": 47, "Cd": 48, "In": 49, "Sn": 50,
    "Sb": 51, "Te": 52, "I": 53, "Xe": 54, "Cs": 55, "Ba": 56, "La": 57,
    "Ce": 58, "Pr": 59, "Nd": 60, "Pm": 61, "Sm": 62, "Eu": 63, "Gd": 64,
    "Tb": 65, "Dy": 66, "Ho": 67, "Er": 68, "Tm": 69, "Yb": 70, "Lu": 71,
    "Hf": 72, "Ta": 73, "W": 74, "Re": 75, "Os": 76, "Ir": 77, "Pt": 78,
    "Au": 79, "Hg": 80, "Tl": 81, "Pb": 82, "Bi": 83, "Po": 84, "At": 85,
    "Rn": 86, "Fr": 87, "Ra": 88, "Ac": 89, "Th": 90, "Pa": 91, "U": 92,
}

SINGLE = "single"
DOUBLE = "double"
TRIPLE = "triple"
AROMATIC = "aromatic"

BOND_ORDER_VALUE = {SINGLE: 1.0, DOUBLE: 2.0, TRIPLE: 3.0, AROMATIC: 1.5}
BOND_SYMBOL_ORDER = {"-": SINGLE, "=": DOUBLE, "#": TRIPLE, ":": AROMATIC,
                     "/": SINGLE, "\\": SINGLE}


class SmilesError(ValueError):
    """Base class for all SMILES syntax and semantics errors."""


class EmptyInput(SmilesError):
    pass


class UnbalancedBranch(SmilesError):
    pass


class DanglingRingBond(SmilesError):
    pass


class UnknownElement(SmilesError):
    pass


class UnterminatedBracket(SmilesError):
    pass


class NoRings(ValueError):
    """Molecule has no rings, so its scaffold is empty."""


class TooManyPlaceholders(ValueError):
    """Requested more placeholders than the scaffold has open positions."""


@dataclass
class Atom:
    element: str
    formal_charge: int = 0
    aromatic: bool = False
    explicit_h: int = 0
    index: int = -1
    isotope: int | None = None
    bracket: bool = False


@dataclass
class Bond:
    a: int
    b: int
    order: str

    def other(self, idx: int) -> int:
        return self.b if idx == self.a else self.a


@dataclass
class Molecule:
    atoms: list[Atom]
    bonds: list[Bond]
    ring_info: list[list[int]] = field(default_factory=list)
    _adj: dict[int, list[tuple[int, str]]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._adj = {i: [] for i in range(len(self.atoms))}
        for bond in self.bonds:
            self._adj[bond.a].append((bond.b, bond.order))
            self._adj[bond.b].append((bond.a, bond.order))
        for nbrs in self._adj.values():
            nbrs.sort()

    def neighbors(self, idx: int) -> list[tuple[int, str]]:
        return self._adj[idx]

    def degree(self, idx: int) -> int:
        return len(self._adj[idx])

    def bond_order_sum(self, idx: int) -> float:
        return sum(BOND_ORDER_VALUE[o] for _, o in self._adj[idx])

    @property
    def total_charge(self) -> int:
        return sum(a.formal_charge for a in self.atoms)

    @property
    def ring_atoms(self) -> set[int]:
        return _ring_atoms(len(self.atoms), self.bonds)


_TOKEN_RE = re.compile(
    r"""(\(\*\)          # placeholder
        |\[[^\]]*\]      # bracket atom
        |Br|Cl           # two-letter organic subset
        |[BCNOPSFI]      # one-letter organic subset
        |[bcnops]        # aromatic organic subset
        |%\d\d           # two-digit ring bond
        |[0-9]           # ring bond
        |[-=\#:/\\().]   # bonds, branches, dot
        )""",
    re.VERBOSE,
)

_BRACKET_RE = re.compile(
    r"""^\[
        (?P<iso>\d+)?
        (?P<elem>se|as|[A-Z][a-z]?|[bcnops])
        (?P<chir>@{1,2})?
        (?P<hcount>H\d*)?
        (?P<charge>\+\d+|-\d+|\++|-+)?
        \]$""",
    re.VERBOSE,
)


@dataclass
class TokenStream:
    tokens: list[str]

    @property
    def text(self) -> str:
        return "".join(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __len__(self):
        return len(self.tokens)


def tokenize(text: str) -> TokenStream:
    """Split a SMILES string into tokens; lossless for dialect strings.

    Bracket atoms, two-letter elements, %nn ring bonds and the ``(*)``
    placeholder are each one token.
    """
    if not isinstance(text, str):
        raise SmilesError("input is not a string")
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        ch = text[pos]
        if ord(ch) > 127:
            raise SmilesError(f"non-ASCII character at position {pos}")
        if ch == "[":
            end = text.find("]", pos)
            if end < 0:
                raise UnterminatedBracket(f"unterminated bracket at position {pos}")
            tokens.append(text[pos:end + 1])
            pos = end + 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise SmilesError(f"unexpected character {ch!r} at position {pos}")
        tokens.append(m.group(0))
        pos = m.end()
    return TokenStream(tokens)


def is_atom_token(token: str) -> bool:
    return (token.startswith("[")
            or token in ORGANIC_SUBSET
            or token in AROMATIC_ORGANIC)


def _parse_bracket(token: str) -> Atom:
    m = _BRACKET_RE.match(token)
    if m is None:
        raise SmilesError(f"malformed bracket atom {token!r}")
    elem = m.group("elem")
    aromatic = elem[0].islower()
    if aromatic:
        if elem not in AROMATIC_BRACKET:
            raise UnknownElement(f"{elem!r} cannot be aromatic")
        symbol = elem.capitalize()
    else:
        symbol = elem
    if symbol not in ATOMIC_NUMBER:
        raise UnknownElement(f"unknown element {symbol!r}")
    hcount = 0
    if m.group("hcount"):
        digits = m.group("hcount")[1:]
        hcount = int(digits) if digits else 1
    charge = 0
    raw = m.group("charge")
    if raw:
        if raw[0] == "+":
            charge = int(raw[1:]) if raw[1:].isdigit() else len(raw)
        else:
            charge = -(int(raw[1:]) if raw[1:].isdigit() else len(raw))
    if not -4 <= charge <= 4:
        raise SmilesError(f"formal charge {charge} out of range [-4, 4]")
    iso = int(m.group("iso")) if m.group("iso") else None
    return Atom(element=symbol, formal_charge=charge, aromatic=aromatic,
                explicit_h=hcount, isotope=iso, bracket=True)


def _implicit_hydrogens(element: str, charge: int, needed: int,
                        promote: bool = True) -> int:
    """Hydrogen count left over after `needed` valence units are consumed.

    `promote` allows stepping to higher standard valences (S 2->4->6 etc.);
    aromatic atoms never promote, which yields the conventional counts for
    aromatic C/N/O/S without Kekule assignment.
    """
    valences = VALENCES.get(element, ())
    if not promote:
        valences = valences[:1]
    for valence in valences:
        adjusted = valence + charge
        if adjusted >= needed:
            return adjusted - needed
    return 0


def _needed_valence(mol: Molecule, idx: int) -> int:
    """Valence units consumed by an atom's bonds.

    Aromatic atoms consume degree + 1 (one unit for the delocalized pi
    system), which reproduces the expected hydrogen counts for aromatic
    C/N/O/S without Kekule assignment.
    """
    atom = mol.atoms[idx]
    if atom.aromatic:
        return mol.degree(idx) + 1
    return math.ceil(mol.bond_order_sum(idx) - 1e-9)


def parse_smiles(text: str) -> Molecule:
    """Parse a SMILES string into a molecular graph.

    Aromaticity is taken from the input annotation (lowercase atoms and
    ':' bonds); no perception is performed.  Chirality and bond-direction
    markers are accepted and discarded.
    """
    if text is None or text == "":
        raise EmptyInput("empty SMILES input")
    stream = tokenize(text)
    atoms: list[Atom] = []
    bonds: list[Bond] = []
    prev: int | None = None
    pending: str | None = None
    stack: list[int | None] = []
    ring_open: dict[str, tuple[int, str | None]] = {}
    bonded_pairs: set[tuple[int, int]] = set()

    def add_bond(a: int, b: int, order: str | None):
        if a == b:
            raise SmilesError("bond endpoints must be distinct")
        if order is None:
            order = (AROMATIC if atoms[a].aromatic and atoms[b].aromatic
                     else SINGLE)
        key = (min(a, b), max(a, b))
        if key in bonded_pairs:
            raise SmilesError(f"duplicate bond between atoms {a} and {b}")
        bonded_pairs.add(key)
        bonds.append(Bond(key[0], key[1], order))

    for token in stream:
        if token == PLACEHOLDER:
            raise SmilesError("placeholder token is not a molecule")
        if is_atom_token(token):
            if token.startswith("["):
                atom = _parse_bracket(token)
            elif token in AROMATIC_ORGANIC:
                atom = Atom(element=token.capitalize(), aromatic=True)
            else:
                atom = Atom(element=token)
            atom.index = len(atoms)
            atoms.append(atom)
            if prev is not None:
                add_bond(prev, atom.index, pending)
            pending = None
            prev = atom.index
        elif token in BOND_SYMBOL_ORDER:
            if pending is not None:
                raise SmilesError("two consecutive bond symbols")
            pending = BOND_SYMBOL_ORDER[token]
        elif token == "(":
            if prev is None:
                raise UnbalancedBranch("branch opened before any atom")
            if pending is not None:
                raise SmilesError("bond symbol before branch open")
            stack.append(prev)
        elif token == ")":
            if not stack:
                raise UnbalancedBranch("unmatched closing parenthesis")
            if pending is not None:
                raise SmilesError("dangling bond at branch close")
            prev = stack.pop()
        elif token == ".":
            if pending is not None:
                raise SmilesError("bond symbol before dot")
            prev = None
        else:  # ring-bond digit or %nn
            digit = token[1:] if token.startswith("%") else token
            if prev is None:
                raise SmilesError("ring bond before any atom")
            if digit in ring_open:
                other, other_order = ring_open.pop(digit)
                order = pending if pending is not None else other_order
                if (pending is not None and other_order is not None
                        and pending != other_order):
                    raise SmilesError(f"conflicting orders on ring bond {digit}")
                add_bond(other, prev, order)
            else:
                ring_open[digit] = (prev, pending)
            pending = None

    if stack:
        raise UnbalancedBranch("unclosed branch at end of input")
    if ring_open:
        raise DanglingRingBond(
            "unmatched ring bond digit(s): " + ", ".join(sorted(ring_open)))
    if pending is not None:
        raise SmilesError("dangling bond at end of input")
    if not atoms:
        raise SmilesError("no atoms in input")

    mol = Molecule(atoms=atoms, bonds=bonds)
    for atom in atoms:
        if not atom.bracket:
            atom.explicit_h = _implicit_hydrogens(
                atom.element, atom.formal_charge, _needed_valence(mol, atom.index),
                promote=not atom.aromatic)
    mol.ring_info = _smallest_rings(len(atoms), bonds)
    return mol


def strip_stereo(text: str) -> str:
    """Delete chirality and cis/trans markers at the token level."""
    out = []
    for token in tokenize(text):
        if token in ("/", "\\"):
            continue
        if token.startswith("["):
            token = token.replace("@", "")
        out.append(token)
    return "".join(out)


# ---------------------------------------------------------------------------
# ring perception

def _ring_bonds(n_atoms: int, bonds: list[Bond]) -> set[int]:
    """Indices of bonds that lie on a cycle (non-bridge edges)."""
    adj: dict[int, list[tuple[int, int]]] = {i: [] for i in range(n_atoms)}
    for bi, bond in enumerate(bonds):
        adj[bond.a].append((bond.b, bi))
        adj[bond.b].append((bond.a, bi))
    disc = [-1] * n_atoms
    low = [0] * n_atoms
    bridges: set[int] = set()
    counter = 0
    for root in range(n_atoms):
        if disc[root] >= 0:
            continue
        stack = [(root, -1, iter(adj[root]))]
        disc[root] = low[root] = counter
        counter += 1
        while stack:
            node, in_edge, it = stack[-1]
            advanced = False
            for nbr, bi in it:
                if bi == in_edge:
                    continue
                if disc[nbr] < 0:
                    disc[nbr] = low[nbr] = counter
                    counter += 1
                    stack.append((nbr, bi, iter(adj[nbr])))
                    advanced = True
                    break
                low[node] = min(low[node], disc[nbr])
            if not advanced:
                stack.pop()
                if stack:
                    parent = stack[-1][0]
                    low[parent] = min(low[parent], low[node])
                    if low[node] > disc[parent]:
                        bridges.add(in_edge)
    return {bi for bi in range(len(bonds)) if bi not in bridges}


def _ring_atoms(n_atoms: int, bonds: list[Bond]) -> set[int]:
    atoms: set[int] = set()
    for bi in _ring_bonds(n_atoms, bonds):
        atoms.add(bonds[bi].a)
        atoms.add(bonds[bi].b)
    return atoms


def _smallest_rings(n_atoms: int, bonds: list[Bond]) -> list[list[int]]:
    """One shortest cycle per independent ring (spanning-tree chords)."""
    adj: dict[int, list[int]] = {i: [] for i in range(n_atoms)}
    pair_set = set()
    for bond in bonds:
        adj[bond.a].append(bond.b)
        adj[bond.b].append(bond.a)
        pair_set.add((bond.a, bond.b))
    visited = set()
    tree_edges = set()
    for root in range(n_atoms):
        if root in visited:
            continue
        visited.add(root)
        queue = [root]
        while queue:
            node = queue.pop(0)
            for nbr in sorted(adj[node]):
                if nbr not in visited:
                    visited.add(nbr)
                    tree_edges.add((min(node, nbr), max(node, nbr)))
                    queue.append(nbr)
    rings = []
    seen = set()
    for a, b in sorted(pair_set):
        if (a, b) in tree_edges:
            continue
        path = _shortest_path_avoiding(adj, a, b)
        if path is None:
            continue
        idx = path.index(min(path))
        rotated = path[idx:] + path[:idx]
        if len(rotated) > 2 and rotated[1] > rotated[-1]:
            rotated = [rotated[0]] + rotated[1:][::-1]
        key = tuple(rotated)
        if key not in seen:
            seen.add(key)
            rings.append(rotated)
    return rings


def _shortest_path_avoiding(adj, a, b):
    """Shortest a->b path not using the (a, b) edge, as a cycle atom list."""
    parent = {a: None}
    queue = [a]
    while queue:
        node = queue.pop(0)
        for nbr in sorted(adj[node]):
            if node == a and nbr == b:
                continue
            if nbr not in parent:
                parent[nbr] = node
                if nbr == b:
                    path = [b]
                    while parent[path[-1]] is not None:
                        path.append(parent[path[-1]])
                    return path
                queue.append(nbr)
    return None


# ---------------------------------------------------------------------------
# writing

def _implied_h_for_bare(mol: Molecule, idx: int) -> int | None:
    """H count a parser would assign to the bare token, or None if unwritable."""
    atom = mol.atoms[idx]
    if atom.aromatic and atom.element.lower() not in AROMATIC_ORGANIC:
        return None
    if not atom.aromatic and atom.element not in ORGANIC_SUBSET:
        return None
    return _implicit_hydrogens(atom.element, 0, _needed_valence(mol, idx),
                               promote=not atom.aromatic)


def _atom_token(mol: Molecule, idx: int) -> str:
    atom = mol.atoms[idx]
    symbol = atom.element.lower() if atom.aromatic else atom.element
    if (atom.formal_charge == 0 and atom.isotope is None
            and _implied_h_for_bare(mol, idx) == atom.explicit_h):
        return symbol
    parts = ["["]
    if atom.isotope is not None:
        parts.append(str(atom.isotope))
    parts.append(symbol)
    if atom.explicit_h == 1:
        parts.append("H")
    elif atom.explicit_h > 1:
        parts.append(f"H{atom.explicit_h}")
    charge = atom.formal_charge
    if charge == 1:
        parts.append("+")
    elif charge == -1:
        parts.append("-")
    elif charge > 1:
        parts.append(f"+{charge}")
    elif charge < -1:
        parts.append(f"-{-charge}")
    parts.append("]")
    return "".join(parts)


def _bond_symbol(mol: Molecule, a: int, b: int, order: str) -> str:
    both_aromatic = mol.atoms[a].aromatic and mol.atoms[b].aromatic
    default = AROMATIC if both_aromatic else SINGLE
    if order == default:
        return ""
    return {SINGLE: "-", DOUBLE: "=", TRIPLE: "#", AROMATIC: ":"}[order]


def write_smiles(mol: Molecule) -> str:
    """Serialize a molecule; deterministic given atom ordering.

    The output re-parses to a graph isomorphic to the input (round-trip
    property); it is not a canonical form.
    """
    n = len(mol.atoms)
    if n == 0:
        raise SmilesError("cannot write an empty molecule")
    order_of = {}
    for bond in mol.bonds:
        order_of[(bond.a, bond.b)] = bond.order
        order_of[(bond.b, bond.a)] = bond.order

    visited = [False] * n
    tree_children: dict[int, list[int]] = {i: [] for i in range(n)}
    ring_partners: dict[int, list[int]] = {i: [] for i in range(n)}
    components = []
    for root in range(n):
        if visited[root]:
            continue
        components.append(root)
        visited[root] = True
        stack = [root]
        back_edges = set()
        while stack:
            node = stack.pop()
            for nbr, _ in mol.neighbors(node):
                if not visited[nbr]:
                    visited[nbr] = True
                    tree_children[node].append(nbr)
                    stack.append(nbr)
                else:
                    key = (min(node, nbr), max(node, nbr))
                    if nbr not in tree_children[node] and node not in tree_children[nbr]:
                        if key not in back_edges:
                            back_edges.add(key)
                            ring_partners[node].append(nbr)
                            ring_partners[nbr].append(node)

    digit_of: dict[tuple[int, int], str] = {}
    free_digits = [str(d) for d in range(1, 10)] + [f"%{d}" for d in range(10, 100)]
    in_use: set[str] = set()

    def next_digit() -> str:
        for d in free_digits:
            if d not in in_use:
                in_use.add(d)
                return d
        raise SmilesError("ring bond digits exhausted")

    out: list[str] = []

    def emit(node: int, parent: int | None):
        if parent is not None:
            out.append(_bond_symbol(mol, parent, node, order_of[(parent, node)]))
        out.append(_atom_token(mol, node))
        for partner in sorted(ring_partners[node]):
            key = (min(node, partner), max(node, partner))
            if key in digit_of:
                digit = digit_of.pop(key)
                out.append(digit)
                in_use.discard(digit)
            else:
                digit = next_digit()
                digit_of[key] = digit
                out.append(_bond_symbol(mol, node, partner, order_of[(node, partner)]))
                out.append(digit)
        children = tree_children[node]
        for i, child in enumerate(children):
            if i < len(children) - 1:
                out.append("(")
                emit(child, node)
                out.append(")")
            else:
                emit(child, node)

    for i, root in enumerate(components):
        if i:
            out.append(".")
        emit(root, None)
    return "".join(out)


# ---------------------------------------------------------------------------
# graph isomorphism (used by round-trip checks and deduplication helpers)

def _atom_signature(mol: Molecule, idx: int) -> tuple:
    atom = mol.atoms[idx]
    orders = tuple(sorted(o for _, o in mol.neighbors(idx)))
    return (atom.element, atom.formal_charge, atom.aromatic,
            atom.explicit_h, atom.isotope, mol.degree(idx), orders)


def isomorphic(m1: Molecule, m2: Molecule) -> bool:
    """Attribute-preserving graph isomorphism via backtracking search."""
    if len(m1.atoms) != len(m2.atoms) or len(m1.bonds) != len(m2.bonds):
        return False
    sig1 = [_atom_signature(m1, i) for i in range(len(m1.atoms))]
    sig2 = [_atom_signature(m2, i) for i in range(len(m2.atoms))]
    if sorted(sig1) != sorted(sig2):
        return False
    candidates = [[j for j in range(len(m2.atoms)) if sig2[j] == sig1[i]]
                  for i in range(len(m1.atoms))]
    order = sorted(range(len(m1.atoms)), key=lambda i: len(candidates[i]))
    mapping: dict[int, int] = {}
    used: set[int] = set()

    def backtrack(pos: int) -> bool:
        if pos == len(order):
            return True
        i = order[pos]
        for j in candidates[i]:
            if j in used:
                continue
            ok = True
            for nbr, bond_order in m1.neighbors(i):
                if nbr in mapping:
                    partner = mapping[nbr]
                    if (partner, bond_order) not in m2.neighbors(j):
                        ok = False
                        break
            if not ok:
                continue
            mapping[i] = j
            used.add(j)
            if backtrack(pos + 1):
                return True
            del mapping[i]
            used.discard(j)
        return False

    return backtrack(0)


# ---------------------------------------------------------------------------
# scaffolds

@dataclass
class Scaffold:
    core: Molecule
    smiles: str
    placeholder_positions: list[int]


def free_valence(mol: Molecule, idx: int) -> int:
    """Bonding capacity left after current bonds and hydrogens.

    For bare organic-subset atoms this equals the implicit hydrogen count
    (a new substituent displaces a hydrogen); bracket atoms keep their
    written hydrogens, so capacity is what the charge-adjusted valence
    leaves over.
    """
    atom = mol.atoms[idx]
    if not atom.bracket:
        return atom.explicit_h
    needed = _needed_valence(mol, idx) + atom.explicit_h
    return _implicit_hydrogens(atom.element, atom.formal_charge, needed,
                               promote=not atom.aromatic)


def murcko_scaffold(mol: Molecule) -> Scaffold:
    """Reduce a molecule to its ring systems plus the linkers between them.

    Terminal acyclic atoms are pruned iteratively until only ring atoms
    and atoms on paths between rings remain.
    """
    ring = mol.ring_atoms
    if not ring:
        raise NoRings("molecule has no rings")
    keep = set(range(len(mol.atoms)))
    changed = True
    while changed:
        changed = False
        degrees = {i: 0 for i in keep}
        for bond in mol.bonds:
            if bond.a in keep and bond.b in keep:
                degrees[bond.a] += 1
                degrees[bond.b] += 1
        for i in sorted(keep):
            if i not in ring and degrees[i] <= 1:
                keep.discard(i)
                changed = True

    remap = {old: new for new, old in enumerate(sorted(keep))}
    atoms = []
    for old in sorted(keep):
        src = mol.atoms[old]
        atoms.append(Atom(element=src.element, formal_charge=src.formal_charge,
                          aromatic=src.aromatic, explicit_h=src.explicit_h,
                          index=remap[old], isotope=src.isotope,
                          bracket=src.bracket))
    bonds = [Bond(remap[b.a], remap[b.b], b.order) for b in mol.bonds
             if b.a in keep and b.b in keep]
    core = Molecule(atoms=atoms, bonds=bonds)
    for atom in core.atoms:
        if not atom.bracket:
            atom.explicit_h = _implicit_hydrogens(
                atom.element, atom.formal_charge, _needed_valence(core, atom.index),
                promote=not atom.aromatic)
    core.ring_info = _smallest_rings(len(atoms), bonds)
    smiles = write_smiles(core)
    written = parse_smiles(smiles)
    positions = []
    atom_counter = 0
    for offset, token in enumerate(tokenize(smiles)):
        if is_atom_token(token):
            if free_valence(written, atom_counter) > 0:
                positions.append(offset)
            atom_counter += 1
    return Scaffold(core=core, smiles=smiles, placeholder_positions=positions)


def insert_placeholders(scaffold: Scaffold, count: int, seed: int) -> str:
    """Insert ``(*)`` after `count` randomly chosen open-valence atom tokens.

    Deterministic for a given seed.  Placeholders go after the atom's
    ring-bond digits so the result stays grammatical.
    """
    import random

    if count < 0:
        raise ValueError("count must be non-negative")
    if count == 0:
        return scaffold.smiles
    eligible = scaffold.placeholder_positions
    if count > len(eligible):
        raise TooManyPlaceholders(
            f"requested {count} placeholders, only {len(eligible)} legal positions")
    rng = random.Random(seed)
    chosen = sorted(rng.sample(eligible, count))
    tokens = list(tokenize(scaffold.smiles))
    for offset in reversed(chosen):
        insert_at = offset + 1
        while insert_at < len(tokens) and (tokens[insert_at].isdigit()
                                           or tokens[insert_at].startswith("%")):
            insert_at += 1
        tokens.insert(insert_at, PLACEHOLDER)
    return "".join(tokens)

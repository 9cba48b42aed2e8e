"""Circular (Morgan) fingerprints as packed bit vectors, plus Dice and
Tanimoto measures and dense pairwise distance matrices.

All hashing goes through a fixed 64-bit mixing function, so fingerprints
are bit-exact across runs and platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chem import ATOMIC_NUMBER, BOND_ORDER_VALUE, Molecule

_MASK = (1 << 64) - 1
_SEED = 0x9E3779B97F4A7C15


class WidthMismatch(ValueError):
    pass


class EmptyFingerprint(ValueError):
    pass


def _mix(x: int) -> int:
    # murmur3-style 64-bit finalizer, fixed constants
    x &= _MASK
    x ^= x >> 33
    x = (x * 0xFF51AFD7ED558CCD) & _MASK
    x ^= x >> 33
    x = (x * 0xC4CEB9FE1A85EC53) & _MASK
    x ^= x >> 33
    return x


def _hash_ints(values) -> int:
    h = _SEED
    for v in values:
        h = _mix(h ^ _mix(v & _MASK))
    return _mix(h ^ len(values))


@dataclass
class BitFingerprint:
    bits: np.ndarray  # packed uint64 words, bit i -> bits[i // 64] bit (i % 64)
    n_bits: int
    radius: int

    def popcount(self) -> int:
        return int(np.bitwise_count(self.bits).sum())

    def get(self, i: int) -> bool:
        return bool((self.bits[i // 64] >> (i % 64)) & 1)

    def on_bits(self) -> list[int]:
        out = []
        for w, word in enumerate(self.bits):
            word = int(word)
            while word:
                low = word & -word
                out.append(w * 64 + low.bit_length() - 1)
                word ^= low
        return out

    def to_hex(self) -> str:
        return self.bits.tobytes().hex()

    @classmethod
    def from_hex(cls, text: str, n_bits: int, radius: int) -> "BitFingerprint":
        bits = np.frombuffer(bytes.fromhex(text), dtype="<u8").copy()
        return cls(bits=bits, n_bits=n_bits, radius=radius)

    def __eq__(self, other):
        return (isinstance(other, BitFingerprint)
                and self.n_bits == other.n_bits
                and np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash((self.n_bits, self.bits.tobytes()))


_BOND_CODE = {order: i + 1 for i, order in enumerate(sorted(BOND_ORDER_VALUE))}


def morgan_fingerprint(mol: Molecule, radius: int = 2,
                       n_bits: int = 2048) -> BitFingerprint:
    """Iterative neighborhood-hashing fingerprint.

    The initial atom invariant is (element, charge, degree, aromatic flag,
    attached hydrogen count); each iteration hashes the center invariant
    with the sorted multiset of (bond order, neighbor invariant).  Every
    environment hash from every iteration is folded modulo n_bits.
    """
    if radius < 0:
        raise ValueError("radius must be non-negative")
    if n_bits < 64 or n_bits & (n_bits - 1):
        raise ValueError("n_bits must be a power of two >= 64")
    n_atoms = len(mol.atoms)
    invariants = []
    for atom in mol.atoms:
        invariants.append(_hash_ints((
            ATOMIC_NUMBER[atom.element],
            atom.formal_charge + 8,
            mol.degree(atom.index),
            int(atom.aromatic),
            atom.explicit_h,
        )))
    words = np.zeros(n_bits // 64, dtype="<u8")

    def fold(env_hash: int):
        bit = env_hash % n_bits
        words[bit // 64] |= np.uint64(1 << (bit % 64))

    for inv in invariants:
        fold(inv)
    for _ in range(radius):
        nxt = []
        for i in range(n_atoms):
            pairs = sorted((_BOND_CODE[order], invariants[j])
                           for j, order in mol.neighbors(i))
            flat = [invariants[i]]
            for code, inv in pairs:
                flat.append(code)
                flat.append(inv)
            nxt.append(_hash_ints(flat))
        invariants = nxt
        for inv in invariants:
            fold(inv)
    return BitFingerprint(bits=words, n_bits=n_bits, radius=radius)


def _check_widths(a: BitFingerprint, b: BitFingerprint):
    if a.n_bits != b.n_bits:
        raise WidthMismatch(f"widths differ: {a.n_bits} vs {b.n_bits}")


def dice_distance(a: BitFingerprint, b: BitFingerprint) -> float:
    """1 - 2|a&b| / (|a| + |b|)."""
    _check_widths(a, b)
    pa, pb = a.popcount(), b.popcount()
    if pa == 0 or pb == 0:
        raise EmptyFingerprint("dice distance is undefined for empty fingerprints")
    inter = int(np.bitwise_count(a.bits & b.bits).sum())
    return 1.0 - 2.0 * inter / (pa + pb)


def tanimoto_similarity(a: BitFingerprint, b: BitFingerprint) -> float:
    """|a&b| / |a|b|; 1.0 when both vectors are empty."""
    _check_widths(a, b)
    inter = int(np.bitwise_count(a.bits & b.bits).sum())
    union = int(np.bitwise_count(a.bits | b.bits).sum())
    if union == 0:
        return 1.0
    return inter / union


@dataclass
class DistanceMatrix:
    n: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.n, self.n):
            raise ValueError("shape mismatch")

    def validate(self):
        if not np.allclose(self.values, self.values.T, atol=0):
            raise ValueError("matrix is not symmetric")
        if (self.values < 0).any() or (self.values > 1).any():
            raise ValueError("entries outside [0, 1]")
        if np.diagonal(self.values).any():
            raise ValueError("diagonal must be zero")

    def to_csv(self, ids: list[str]) -> str:
        lines = [",".join(ids)]
        for row in self.values:
            lines.append(",".join(repr(float(v)) for v in row))
        return "\n".join(lines) + "\n"


def pairwise_distances(fps: list[BitFingerprint]) -> DistanceMatrix:
    """Dense symmetric matrix of Dice distances."""
    if not fps:
        raise ValueError("fingerprint list is empty")
    widths = {fp.n_bits for fp in fps}
    if len(widths) != 1:
        raise WidthMismatch(f"mixed widths: {sorted(widths)}")
    n = len(fps)
    stacked = np.stack([fp.bits for fp in fps])
    pops = np.bitwise_count(stacked).sum(axis=1).astype(float)
    if (pops == 0).any():
        raise EmptyFingerprint("dice distance is undefined for empty fingerprints")
    values = np.zeros((n, n))
    for i in range(n):
        inter = np.bitwise_count(stacked[i + 1:] & stacked[i]).sum(axis=1)
        d = 1.0 - 2.0 * inter / (pops[i + 1:] + pops[i])
        values[i, i + 1:] = d
        values[i + 1:, i] = d
    return DistanceMatrix(n=n, values=values)


def unpack_bits(fps: list[BitFingerprint]) -> np.ndarray:
    """(n, n_bits) float array of 0/1 features; Hamming == squared Euclidean."""
    if not fps:
        return np.zeros((0, 0))
    stacked = np.stack([fp.bits for fp in fps]).view(np.uint8)
    return np.unpackbits(stacked, axis=1, bitorder="little").astype(float)

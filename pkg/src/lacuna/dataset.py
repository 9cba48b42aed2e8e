"""Dataset records and line-delimited ingestion.

Input format: one record per line, `SMILES<TAB>year<TAB>id` with year and
id optional; lines starting with '#' are ignored.  Ingestion strips stereo
markers and deduplicates on the stripped token string (equal strings imply
equal fingerprints, so this is the spec's fingerprint+token key).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .chem import Molecule, SmilesError, parse_smiles, strip_stereo
from .fingerprint import BitFingerprint


@dataclass
class Record:
    id: str
    smiles: str
    year: float | None = None
    mol: Molecule | None = field(default=None, repr=False)
    fingerprint: BitFingerprint | None = field(default=None, repr=False)
    lens: float | None = None


@dataclass
class IngestStats:
    read: int = 0
    parsed: int = 0
    duplicates: int = 0
    errors: int = 0


def parse_dataset_lines(lines) -> tuple[list[Record], IngestStats]:
    """Parse, stereo-strip, and deduplicate raw dataset lines."""
    stats = IngestStats()
    records: list[Record] = []
    seen: set[str] = set()
    counter = 0
    for raw in lines:
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        stats.read += 1
        parts = line.split("\t")
        smiles = parts[0].strip()
        year: float | None = None
        rec_id = ""
        if len(parts) > 1 and parts[1].strip():
            try:
                year = float(parts[1].strip())
            except ValueError:
                stats.errors += 1
                continue
        if len(parts) > 2 and parts[2].strip():
            rec_id = parts[2].strip()
        try:
            stripped = strip_stereo(smiles)
            mol = parse_smiles(stripped)
        except (SmilesError, ValueError):
            stats.errors += 1
            continue
        stats.parsed += 1
        if stripped in seen:
            stats.duplicates += 1
            continue
        seen.add(stripped)
        counter += 1
        if not rec_id:
            rec_id = f"r{counter:05d}"
        records.append(Record(id=rec_id, smiles=stripped, year=year, mol=mol))
    return records, stats


def load_records(path) -> tuple[list[Record], IngestStats]:
    with open(path, encoding="ascii") as handle:
        return parse_dataset_lines(handle)


def save_records(records: list[Record], path):
    with open(path, "w", encoding="ascii") as handle:
        handle.write("# id\tsmiles\tyear\n")
        for r in records:
            year = "" if r.year is None else repr(r.year)
            handle.write(f"{r.id}\t{r.smiles}\t{year}\n")


def load_saved_records(path) -> list[Record]:
    """Read back the artifact written by save_records."""
    records = []
    with open(path, encoding="ascii") as handle:
        for line in handle:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            rec_id, smiles, year = line.split("\t")
            records.append(Record(id=rec_id, smiles=smiles,
                                  year=float(year) if year else None))
    return records

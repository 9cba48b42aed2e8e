import random

import pytest

from lacuna.chem import (
    AROMATIC,
    DanglingRingBond,
    EmptyInput,
    NoRings,
    SINGLE,
    SmilesError,
    TooManyPlaceholders,
    UnbalancedBranch,
    UnterminatedBracket,
    free_valence,
    insert_placeholders,
    isomorphic,
    murcko_scaffold,
    parse_smiles,
    strip_stereo,
    tokenize,
    write_smiles,
)


def test_parse_trimethylsulfonium():
    # hand expansion of the grammar: C [S+] ( C ) C
    mol = parse_smiles("C[S+](C)C")
    assert len(mol.atoms) == 4
    sulfur = mol.atoms[1]
    assert sulfur.element == "S"
    assert sulfur.formal_charge == 1
    assert mol.total_charge == 1
    assert len(mol.bonds) == 3
    assert all(b.order == SINGLE for b in mol.bonds)
    assert sorted((b.a, b.b) for b in mol.bonds) == [(0, 1), (1, 2), (1, 3)]


def test_parse_empty_input():
    with pytest.raises(EmptyInput):
        parse_smiles("")


def test_parse_dangling_ring_bond():
    with pytest.raises(DanglingRingBond):
        parse_smiles("C1CC")


def test_parse_unbalanced_branch():
    with pytest.raises(UnbalancedBranch):
        parse_smiles("C(C")
    with pytest.raises(UnbalancedBranch):
        parse_smiles("CC)C")


def test_parse_unknown_element():
    with pytest.raises(SmilesError):
        parse_smiles("[Xx]")


def test_parse_benzene():
    mol = parse_smiles("c1ccccc1")
    assert len(mol.atoms) == 6
    assert len(mol.bonds) == 6
    assert all(a.aromatic for a in mol.atoms)
    assert all(b.order == AROMATIC for b in mol.bonds)
    assert all(a.explicit_h == 1 for a in mol.atoms)
    assert len(mol.ring_info) == 1
    assert sorted(mol.ring_info[0]) == [0, 1, 2, 3, 4, 5]


def test_parse_thiophene_hydrogens():
    mol = parse_smiles("c1ccsc1")
    sulfur = next(a for a in mol.atoms if a.element == "S")
    assert sulfur.explicit_h == 0


def test_parse_percent_ring_bond():
    mol = parse_smiles("C%12CCCCC%12")
    assert len(mol.ring_info) == 1
    assert len(mol.ring_info[0]) == 6


def test_parse_charge_forms():
    assert parse_smiles("[O-]C").atoms[0].formal_charge == -1
    assert parse_smiles("[N+2]").atoms[0].formal_charge == 2
    assert parse_smiles("[Fe++]").atoms[0].formal_charge == 2


def test_parse_explicit_hydrogens_bracket():
    atom = parse_smiles("C[CH](N)O").atoms[1]
    assert atom.explicit_h == 1
    assert atom.bracket


def test_strip_stereo_examples():
    assert strip_stereo("F/C=C/F") == "FC=CF"
    assert strip_stereo("C[C@@H](N)O") == "C[CH](N)O"
    assert strip_stereo("c1ccccc1") == "c1ccccc1"


def test_strip_stereo_idempotent():
    for smi in ["F/C=C\\F", "C[C@H](N)O", "CC", "c1ccc(cc1)[S+](C)C"]:
        once = strip_stereo(smi)
        assert strip_stereo(once) == once


def test_tokenize_examples():
    assert tokenize("C[S+](C)C").tokens == ["C", "[S+]", "(", "C", ")", "C"]
    stream = tokenize("c1ccccc1(*)")
    assert len(stream) == 9
    assert stream.tokens[-1] == "(*)"


def test_tokenize_unterminated_bracket():
    with pytest.raises(UnterminatedBracket):
        tokenize("[S+")


def test_tokenize_lossless():
    for smi in ["C[S+](C)C", "c1ccc2ccccc2c1", "C%11CC%11", "F/C=C\\F",
                "c1cc(*)ccc1", "[13CH4]", "CC(=O)[O-].[Na+]"]:
        assert tokenize(smi).text == smi


def test_roundtrip_simple():
    for smi in ["C", "CC", "C[S+](C)C", "c1ccccc1", "Cc1ccccc1",
                "c1ccc(cc1)[S+](c2ccccc2)c3ccccc3", "CC(=O)[O-].[Na+]",
                "C1CC2CCC1CC2", "c1ccc2ccccc2c1", "[I+](c1ccccc1)c1ccccc1"]:
        first = parse_smiles(smi)
        written = write_smiles(first)
        second = parse_smiles(written)
        assert isomorphic(first, second), (smi, written)


def test_write_single_carbon():
    assert write_smiles(parse_smiles("C")) == "C"


def test_write_benzene_reparses_to_aromatic_hexagon():
    mol = parse_smiles(write_smiles(parse_smiles("c1ccccc1")))
    assert len(mol.atoms) == 6
    assert all(a.aromatic for a in mol.atoms)
    assert len(mol.ring_info) == 1


def test_biphenyl_single_bond_preserved():
    mol = parse_smiles(write_smiles(parse_smiles("c1ccccc1-c1ccccc1")))
    single = [b for b in mol.bonds if b.order == SINGLE]
    assert len(single) == 1


def test_murcko_toluene():
    scaffold = murcko_scaffold(parse_smiles("Cc1ccccc1"))
    assert len(scaffold.core.atoms) == 6
    assert all(a.aromatic for a in scaffold.core.atoms)


def test_murcko_diphenyl_sulfonium_fragment():
    scaffold = murcko_scaffold(parse_smiles("c1ccccc1[S+](c2ccccc2)C"))
    assert len(scaffold.core.atoms) == 13  # two phenyls + S+
    sulfur = next(a for a in scaffold.core.atoms if a.element == "S")
    assert sulfur.formal_charge == 1


def test_murcko_acyclic_raises():
    with pytest.raises(NoRings):
        murcko_scaffold(parse_smiles("CCC"))


def test_murcko_idempotent():
    for smi in ["Cc1ccccc1CCc1ccncc1", "c1ccccc1[S+](c2ccccc2)C",
                "CCC1CC1CC2CC2"]:
        scaffold = murcko_scaffold(parse_smiles(smi))
        again = murcko_scaffold(scaffold.core)
        assert isomorphic(scaffold.core, again.core)


def test_murcko_keeps_linker():
    scaffold = murcko_scaffold(parse_smiles("C1CC1CCC1CC1"))
    assert len(scaffold.core.atoms) == 8  # two cyclopropyls + 2-carbon linker


def test_insert_placeholders_benzene():
    scaffold = murcko_scaffold(parse_smiles("Cc1ccccc1"))
    out = insert_placeholders(scaffold, 1, seed=7)
    assert out.count("(*)") == 1
    assert out.replace("(*)", "") == scaffold.smiles


def test_insert_placeholders_zero():
    scaffold = murcko_scaffold(parse_smiles("Cc1ccccc1"))
    assert insert_placeholders(scaffold, 0, seed=1) == scaffold.smiles


def test_insert_placeholders_too_many():
    scaffold = murcko_scaffold(parse_smiles("Cc1ccccc1"))
    with pytest.raises(TooManyPlaceholders):
        insert_placeholders(scaffold, 7, seed=1)


def test_insert_placeholders_deterministic():
    scaffold = murcko_scaffold(parse_smiles("c1ccc(cc1)[S+](c2ccccc2)c3ccccc3"))
    a = insert_placeholders(scaffold, 2, seed=42)
    b = insert_placeholders(scaffold, 2, seed=42)
    assert a == b
    assert a.count("(*)") == 2


def test_placeholder_positions_have_free_valence():
    scaffold = murcko_scaffold(parse_smiles("c1ccc(cc1)[S+](c2ccccc2)c3ccccc3"))
    mol = parse_smiles(scaffold.smiles)
    # S and the three ipso carbons are saturated: 15 ring CH slots remain
    assert len(scaffold.placeholder_positions) == 15
    sulfur = next(a.index for a in mol.atoms if a.element == "S")
    assert free_valence(mol, sulfur) == 0


def test_free_valence_iodonium():
    mol = parse_smiles("[I+](c1ccccc1)c1ccccc1")
    iodine = next(a.index for a in mol.atoms if a.element == "I")
    assert free_valence(mol, iodine) == 0


def test_triphenylsulfonium_counts():
    mol = parse_smiles("c1ccc(cc1)[S+](c2ccccc2)c3ccccc3")
    assert len(mol.atoms) == 19
    assert mol.total_charge == 1
    assert len(mol.ring_info) == 3


def test_parser_never_crashes_on_fuzz():
    rng = random.Random(20240517)
    alphabet = "CcNnOoSs()[]1234567890=#+-%/\\.@Hh*BrClI "
    for _ in range(2000):
        length = rng.randint(0, 30)
        text = "".join(rng.choice(alphabet) for _ in range(length))
        try:
            parse_smiles(text)
        except (SmilesError, ValueError):
            pass


def test_ring_info_consistent_with_bonds():
    mol = parse_smiles("c1ccc2ccccc2c1")
    bond_pairs = {(b.a, b.b) for b in mol.bonds} | {(b.b, b.a) for b in mol.bonds}
    for ring in mol.ring_info:
        for i, atom in enumerate(ring):
            nxt = ring[(i + 1) % len(ring)]
            assert (atom, nxt) in bond_pairs

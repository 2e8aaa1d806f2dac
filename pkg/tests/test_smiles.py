from pathlib import Path
import warnings

import numpy as np
import pytest

from moedti.smiles import (
    AROMATIC,
    FEATURE_LENGTH,
    MultiFragmentError,
    UnclosedRingError,
    UnknownTokenError,
    UnmatchedBranchError,
    ValenceError,
    featurize,
    featurize_atom,
    parse_smiles,
)

DATA = Path(__file__).parent / "data"


def corpus():
    rows = []
    for line in (DATA / "corpus.smi").read_text().splitlines():
        name, smi = line.split("\t")
        rows.append((name, smi))
    return rows


def oracle():
    table = {}
    for line in (DATA / "corpus_oracle.tsv").read_text().splitlines():
        if line.startswith("#"):
            continue
        name, atoms, bonds, hyd = line.split("\t")
        table[name] = (int(atoms), int(bonds), int(hyd))
    return table


def parse_quiet(s):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return parse_smiles(s)


def test_ethanol():
    g = parse_smiles("CCO")
    assert [a.element for a in g.atoms] == ["C", "C", "O"]
    assert sorted((i, j) for i, j, _ in g.bonds) == [(0, 1), (1, 2)]
    assert all(o == 1 for *_, o in g.bonds)


def test_benzene_ring_closure():
    g = parse_smiles("c1ccccc1")
    assert g.n_atoms == 6 and g.n_bonds == 6
    assert all(a.aromatic and a.element == "C" for a in g.atoms)
    assert all(o == AROMATIC for *_, o in g.bonds)
    assert all(a.degree == 2 for a in g.atoms)
    assert (0, 5, AROMATIC) in g.bonds


def test_bracket_atom_charge_and_h():
    g = parse_smiles("[NH3+]CC(=O)[O-]")
    n = g.atoms[0]
    assert (n.element, n.hydrogens, n.charge) == ("N", 3, 1)
    assert g.atoms[-1].charge == -1


@pytest.mark.parametrize(
    "smiles, exc, offset",
    [
        ("C(", UnmatchedBranchError, 2),
        ("CC)C", UnmatchedBranchError, 2),
        ("C1CC", UnclosedRingError, 1),
        ("C?C", UnknownTokenError, 1),
        ("CC.O", MultiFragmentError, 2),
        ("CC(C)(C)(C)(C)C", ValenceError, 1),
    ],
)
def test_malformed_probes(smiles, exc, offset):
    with pytest.raises(exc) as info:
        parse_smiles(smiles)
    assert info.value.offset == offset


def test_corpus_matches_oracle_table():
    table = oracle()
    rows = corpus()
    assert len(rows) == 50
    for name, smi in rows:
        g = parse_quiet(smi)
        hyd = sum(a.hydrogens for a in g.atoms)
        assert (g.n_atoms, g.n_bonds, hyd) == table[name], name


def test_corpus_graph_invariants():
    for _, smi in corpus():
        g = parse_quiet(smi)
        assert sum(a.degree for a in g.atoms) == 2 * g.n_bonds
        assert g.is_connected()
        pairs = [(min(i, j), max(i, j)) for i, j, _ in g.bonds]
        assert len(set(pairs)) == len(pairs)
        assert all(i != j for i, j in pairs)


def test_parsing_is_deterministic():
    for _, smi in corpus():
        a, b = parse_quiet(smi), parse_quiet(smi)
        assert [(x.element, x.degree, x.hydrogens) for x in a.atoms] == [
            (x.element, x.degree, x.hydrogens) for x in b.atoms
        ]
        assert a.bonds == b.bonds


def test_ring_closures_add_bonds_not_atoms():
    g = parse_smiles("C1CCCCC1")
    assert g.n_atoms == 6 and g.n_bonds == 6
    g = parse_smiles("C%10CCCCC%10")
    assert g.n_atoms == 6 and g.n_bonds == 6


def test_stereo_and_isotope_skipped_with_warning():
    with pytest.warns(UserWarning):
        g = parse_smiles("C[C@@H](N)C(=O)O")
    assert g.n_atoms == 6
    with pytest.warns(UserWarning):
        g = parse_smiles("[13CH4]")
    assert g.atoms[0].element == "C"


def test_unknown_element_goes_to_other_bucket():
    g = parse_smiles("[Pt](Cl)Cl")
    v = featurize_atom(g.atoms[0], g)
    assert v[10] == 1


def test_feature_vector_middle_carbon_of_ethanol():
    g = parse_smiles("CCO")
    v = featurize_atom(g.atoms[1], g)
    assert v.shape == (28,)
    assert v[1] == 1  # carbon
    assert v[11 + 2] == 1  # degree 2
    assert v[17 + 2] == 1  # charge 0
    assert v[22] == 0  # not aromatic
    assert v[23 + 2] == 1  # two implicit hydrogens
    # one hot per one-hot block; the aromatic flag is a single bit and is 0 here
    assert v.sum() == 4


def test_feature_vector_aromatic_carbon_has_five_ones():
    g = parse_smiles("c1ccccc1")
    assert featurize_atom(g.atoms[0], g).sum() == 5


def test_oxide_charge_slot():
    g = parse_smiles("[O-]")
    v = featurize_atom(g.atoms[0], g)
    assert v[17 + 1] == 1  # charge -1


def test_feature_length_over_corpus():
    for _, smi in corpus():
        f = featurize(parse_quiet(smi))
        assert f.shape[1] == FEATURE_LENGTH == 28
        assert set(np.unique(f)) <= {0.0, 1.0}

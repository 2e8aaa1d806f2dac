import numpy as np
import pytest

from moedti.errors import DataFormatError, MissingEntityError
from moedti.kgraph import build_kg, load_kg, remove_dti_leakage, sample_negative_triple


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_counts_and_dedup(tmp_path):
    tr = write(tmp_path, "t.tsv", "a\tr\tb\nb\tr\ta\na\tr\tb\n")
    d = write(tmp_path, "d.txt", "a\n")
    t = write(tmp_path, "g.txt", "b\n")
    kg = load_kg(tr, d, t)
    assert kg.n_entities == 2 and kg.n_relations == 1
    assert kg.triples.shape[0] == 2


def test_drkg_style_line(tmp_path):
    tr = write(tmp_path, "t.tsv", "Compound::DB00001\tDGIDB::AGONIST\tGene::1813\n")
    d = write(tmp_path, "d.txt", "Compound::DB00001\n")
    t = write(tmp_path, "g.txt", "Gene::1813\n")
    kg = load_kg(tr, d, t)
    assert kg.n_entities == 2 and kg.triples.shape == (1, 3)
    assert kg.entities.items == ["Compound::DB00001", "Gene::1813"]


def test_missing_drug_id_listed(tmp_path):
    tr = write(tmp_path, "t.tsv", "a\tr\tb\n")
    d = write(tmp_path, "d.txt", "a\nzz\n")
    t = write(tmp_path, "g.txt", "b\nyy\n")
    with pytest.raises(MissingEntityError) as info:
        load_kg(tr, d, t)
    assert info.value.missing == ["zz", "yy"]


def test_malformed_line_reports_line_number(tmp_path):
    tr = write(tmp_path, "t.tsv", "a\tr\tb\nbad line\n")
    d = write(tmp_path, "d.txt", "a\n")
    t = write(tmp_path, "g.txt", "b\n")
    with pytest.raises(DataFormatError) as info:
        load_kg(tr, d, t)
    assert info.value.line == 2


def test_leakage_removal_examples():
    kg = build_kg([("d", "r", "t"), ("d", "r", "e"), ("e", "r", "t")], ["d"], ["t"])
    out = remove_dti_leakage(kg)
    assert out.triples.shape[0] == 2
    assert out.removed_leakage == 1
    kg2 = build_kg([("t", "r", "d"), ("d", "r", "e")], ["d"], ["t"])
    assert remove_dti_leakage(kg2).triples.shape[0] == 1
    clean = build_kg([("d", "r", "e")], ["d"], ["t"])
    np.testing.assert_array_equal(remove_dti_leakage(clean).triples, clean.triples)


def test_leakage_idempotent_and_exhaustive():
    rng = np.random.default_rng(0)
    names = [f"e{i}" for i in range(30)]
    triples = [(names[a], f"r{rng.integers(3)}", names[b])
               for a, b in rng.integers(0, 30, size=(300, 2))]
    kg = build_kg(triples, names[:8], names[5:15])
    once = remove_dti_leakage(kg)
    twice = remove_dti_leakage(once)
    np.testing.assert_array_equal(once.triples, twice.triples)
    for h, _, t in once.triples:
        assert not (h in kg.drugs and t in kg.targets)
        assert not (h in kg.targets and t in kg.drugs)


def test_vocab_round_trip():
    kg = build_kg([("x", "p", "y"), ("y", "q", "z")], ["x"], ["w"])
    for name in kg.entities:
        assert kg.entities.name(kg.entities[name]) == name
    for name in kg.relations:
        assert kg.relations.name(kg.relations[name]) == name
    # drug/target-only ids still get registered
    assert "w" in kg.entities


def test_negative_forced_choice():
    kg = build_kg([("e0", "r", "e1")])
    rng = np.random.default_rng(0)
    h, r, t = sample_negative_triple(kg, (0, 0, 1), rng, side="head")
    assert (h, r, t) == (1, 0, 1)


def test_negative_not_observed_and_balanced():
    rng = np.random.default_rng(1)
    names = [f"e{i}" for i in range(50)]
    kg = build_kg([(names[i], "r", names[(i + 1) % 50]) for i in range(50)])
    heads = 0
    n = 10_000
    for k in range(n):
        tr = tuple(kg.triples[k % 50])
        neg = sample_negative_triple(kg, tr, rng)
        assert neg not in kg
        if neg[2] == tr[2] and neg[0] != tr[0]:
            heads += 1
    assert abs(heads / n - 0.5) <= 0.02

import numpy as np
import pytest

from moedti import tensor as T
from moedti.errors import ContractViolation
from moedti.mol_encoder import MolBatch, MoleculeEncoder
from moedti.seq_encoder import ResidueFeaturizer, ResidueSequence, TargetEncoder
from moedti.smiles import featurize, parse_smiles

from gradhelp import check_until


def small_mol_encoder(seed=0, **kw):
    args = dict(layers=2, hidden=6, mlp_hidden=5, out_dim=4)
    args.update(kw)
    return MoleculeEncoder(np.random.default_rng(seed), **args)


def test_single_atom_readout_is_mlp_of_node():
    enc = small_mol_encoder()
    g = parse_smiles("C")
    batch = MolBatch.from_graphs([g])
    h = enc.node_embeddings(batch).data
    (w0, b0), (w1, b1) = enc.readout
    expected = np.maximum(h @ w0.data + b0.data, 0) @ w1.data + b1.data
    np.testing.assert_array_equal(enc.encode(g).data, expected[0])


def test_symmetric_atoms_get_identical_embeddings():
    enc = small_mol_encoder()
    h = enc.node_embeddings(MolBatch.from_graphs([parse_smiles("CC")])).data
    np.testing.assert_array_equal(h[0], h[1])


def test_gcn_layer_matches_dense_oracle():
    # dense normalised adjacency with self loops, built independently
    enc = small_mol_encoder(layers=1)
    g = parse_smiles("CC(O)N")
    n = g.n_atoms
    a = np.eye(n)
    for i, j, _ in g.bonds:
        a[i, j] = a[j, i] = 1
    d = a.sum(1)
    a_hat = a / np.sqrt(np.outer(d, d))
    w, b = enc.weights[0]
    ref = np.maximum(a_hat @ featurize(g) @ w.data + b.data, 0)
    got = enc.node_embeddings(MolBatch.from_graphs([g])).data
    np.testing.assert_allclose(got, ref, atol=1e-12)


def test_permutation_invariance_ccO():
    enc = MoleculeEncoder(np.random.default_rng(1))
    g = parse_smiles("CCO")
    base = enc.encode(g).data
    for perm in ([2, 0, 1], [1, 2, 0], [2, 1, 0]):
        np.testing.assert_allclose(enc.encode(g.permuted(perm)).data, base, atol=1e-12)


def test_batch_equals_individual_encoding():
    enc = MoleculeEncoder(np.random.default_rng(2))
    graphs = [parse_smiles(s) for s in ("CCO", "c1ccccc1", "C", "CC(=O)[O-]")]
    joint = enc.encode_batch(MolBatch.from_graphs(graphs)).data
    for k, g in enumerate(graphs):
        np.testing.assert_allclose(joint[k], enc.encode(g).data, atol=1e-12)
    assert joint.shape == (4, 32)


def test_empty_graph_rejected():
    from moedti.smiles import MolecularGraph
    with pytest.raises(ContractViolation):
        MolBatch.from_graphs([MolecularGraph(atoms=[], bonds=[])])


def test_mol_encoder_gradients():
    rng = np.random.default_rng(4)
    graphs = [parse_smiles(s) for s in ("CC(=O)O", "c1ccncc1", "CN")]
    batch = MolBatch.from_graphs(graphs)

    def make(k):
        enc = small_mol_encoder(seed=int(rng.integers(1 << 30)))
        feats = T.Tensor(batch.features + rng.normal(0, 0.3, batch.features.shape), requires_grad=True)
        proj = T.Tensor(rng.normal(size=(4, 1)))
        return (lambda: T.total(T.sigmoid(enc.encode_batch(batch, feats) @ proj))), [feats] + enc.parameters()

    check_until(3, make)


def seq(tid, s):
    return ResidueSequence.from_string(tid, s)


def test_length_invariance():
    rng = np.random.default_rng(0)
    enc = TargetEncoder(rng)
    for m in (1, 10, 50, 500, 1000):
        s = "".join(rng.choice(list("ACDEFGHIKLMNPQRSTVWY"), m))
        assert enc.encode(seq("t", s)).shape == (32,)


def test_unknown_residue_maps_to_x_and_truncation():
    s = ResidueSequence.from_string("t", "ACZB*", max_len=4)
    assert s.residues.tolist() == [0, 1, 20, 20]
    assert s.truncated == 1
    with pytest.raises(ContractViolation):
        ResidueSequence.from_string("t", "")


def test_zero_embeddings_give_zero_output():
    enc = TargetEncoder(np.random.default_rng(0))
    enc.featurizer.table.data[:] = 0
    assert np.all(enc.encode(seq("t", "ACDEFGHIK")).data == 0)


def test_batched_targets_match_individual():
    enc = TargetEncoder(np.random.default_rng(3))
    seqs = [seq("a", "ACDWWK"), seq("b", "M"), seq("c", "PQRSTVWYACDEFGHIKLMN" * 3)]
    joint = enc.encode_batch(enc.batch(seqs)).data
    for k, s in enumerate(seqs):
        np.testing.assert_allclose(joint[k], enc.encode(s).data, atol=1e-12)


def test_precomputed_features_path():
    rng = np.random.default_rng(5)
    feats = {"a": rng.normal(size=(12, 8)), "b": rng.normal(size=(3, 8))}
    enc = TargetEncoder(rng, featurizer=ResidueFeaturizer(e_dim=8, precomputed=feats))
    out = enc.encode_batch(enc.batch([seq("a", "A" * 12), seq("b", "AAA")]))
    assert out.shape == (2, 32)
    assert enc.featurizer.parameters() == []


def test_seq_encoder_gradients():
    rng = np.random.default_rng(8)
    seqs = [seq("a", "ACDWWKLLPQ"), seq("b", "MKV"), seq("c", "GGHHIIKKLLMMNN")]

    def make(k):
        enc = TargetEncoder(np.random.default_rng(int(rng.integers(1 << 30))), e_dim=3,
                            channels=(4, 3), kernel=3, pool=4, out_dim=2)
        batch = enc.batch(seqs)
        return (lambda: T.total(T.sigmoid(enc.encode_batch(batch)))), enc.parameters()

    check_until(3, make)

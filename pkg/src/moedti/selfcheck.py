"""Finite-difference gradient checks over every trainable component."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as T
from .gradcheck import check_gradients, kink_margin
from .moe import ExpertClassifier, GatingModel, unit_rows
from .mol_encoder import MolBatch, MoleculeEncoder
from .seq_encoder import ResidueSequence, TargetEncoder
from .smiles import parse_smiles

SMILES_POOL = ("CCO", "CC(=O)O", "c1ccncc1", "CN", "OCC(N)C(=O)O", "c1ccsc1C", "C1CCOCC1",
               "CS(=O)(=O)N", "CC(C)Cl", "c1ccccc1O")
RESIDUES = "ACDEFGHIKLMNPQRSTVWY"


@dataclass
class ComponentReport:
    component: str
    configs: int
    worst: float
    skipped: int

    def ok(self, tol: float = 1e-4) -> bool:
        return self.worst <= tol


Builder = Callable[[np.random.Generator], tuple[Callable[[], T.Tensor], list[T.Tensor]]]


def _mol(rng):
    enc = MoleculeEncoder(rng, layers=int(rng.integers(1, 4)), hidden=int(rng.integers(3, 8)),
                          mlp_hidden=int(rng.integers(3, 8)), out_dim=int(rng.integers(2, 5)))
    picks = rng.choice(len(SMILES_POOL), size=int(rng.integers(1, 4)), replace=False)
    batch = MolBatch.from_graphs([parse_smiles(SMILES_POOL[i]) for i in picks])
    feats = T.Tensor(batch.features + rng.normal(0, 0.3, batch.features.shape))
    proj = T.Tensor(rng.normal(size=(enc.out_dim, 1)))
    return (lambda: T.total(T.sigmoid(enc.encode_batch(batch, feats) @ proj))), enc.parameters()


def _cnn(rng):
    k = int(rng.choice([3, 5]))
    enc = TargetEncoder(rng, e_dim=int(rng.integers(2, 5)),
                        channels=tuple(int(c) for c in rng.integers(2, 5, size=int(rng.integers(1, 3)))),
                        kernel=k, pool=int(rng.integers(2, 5)), out_dim=int(rng.integers(2, 4)))
    seqs = [ResidueSequence.from_string(f"t{i}", "".join(rng.choice(list(RESIDUES), int(rng.integers(1, 16)))))
            for i in range(int(rng.integers(1, 4)))]
    batch = enc.batch(seqs)
    return (lambda: T.total(T.sigmoid(enc.encode_batch(batch)))), enc.parameters()


def _head(rng):
    n_in = int(rng.integers(2, 9))
    g = ExpertClassifier(rng, n_in, int(rng.integers(2, 7)))
    x = T.Tensor(rng.normal(size=(int(rng.integers(2, 7)), n_in)))
    y = rng.integers(0, 2, x.shape[0]).astype(float)
    return (lambda: _bce(g(x), y)), g.parameters()


def _gate(rng):
    widths = [int(w) for w in rng.integers(2, 5, size=4)]
    gate = GatingModel(rng, sum(widths), int(rng.integers(2, 7)))
    gate.w1.data[:] = rng.uniform(-1, 1, gate.w1.shape)  # move off the even-mix start
    n = int(rng.integers(2, 7))
    blocks = [T.Tensor(rng.normal(size=(n, w)), requires_grad=True) for w in widths]
    pe = T.Tensor(rng.uniform(0.05, 0.95, n))
    pi = T.Tensor(rng.uniform(0.05, 0.95, n))
    y = rng.integers(0, 2, n).astype(float)

    def fn():
        w = gate(T.concat([unit_rows(b) for b in blocks], axis=1))
        return _bce(w * pe + (1.0 - w) * pi, y)

    return fn, gate.parameters() + blocks


def _kg(rng):
    # entity table trained through the extrinsic head, as in the tuning step
    n_ent, d = int(rng.integers(4, 10)), int(rng.integers(2, 5))
    ent = T.Tensor(rng.normal(size=(n_ent, d)), requires_grad=True, name="entity")
    g = ExpertClassifier(rng, 2 * d, int(rng.integers(2, 6)))
    n = int(rng.integers(2, 6))
    dr, tg = rng.integers(0, n_ent, n), rng.integers(0, n_ent, n)
    y = rng.integers(0, 2, n).astype(float)

    def fn():
        h = T.concat([T.embedding_lookup(ent, dr), T.embedding_lookup(ent, tg)], axis=1)
        return _bce(g(h), y)

    return fn, [ent]


def _bce(p, y):
    return -(T.total(T.Tensor(y) * T.log(p)) + T.total(T.Tensor(1.0 - y) * T.log(1.0 - p)))


COMPONENTS: dict[str, Builder] = {
    "kg-embeddings": _kg,
    "gnn": _mol,
    "cnn": _cnn,
    "g_ex": _head,
    "g_in": _head,
    "gate": _gate,
}


def run_gradchecks(n_configs: int = 20, seed: int = 0, margin: float = 1e-3,
                   components: list[str] | None = None) -> list[ComponentReport]:
    """Check ``n_configs`` random configurations per component, skipping ones near a kink."""
    reports = []
    for name in components or list(COMPONENTS):
        build = COMPONENTS[name]
        rng = np.random.default_rng([seed, sorted(COMPONENTS).index(name)])
        done = skipped = 0
        worst = 0.0
        while done < n_configs:
            if skipped > 50 * n_configs:
                raise RuntimeError(f"{name}: could not find configurations away from kinks")
            fn, params = build(rng)
            if kink_margin(fn) < margin:
                skipped += 1
                continue
            res = check_gradients(fn, params)
            worst = max(worst, res.max_rel_error)
            done += 1
        reports.append(ComponentReport(name, done, worst, skipped))
    return reports

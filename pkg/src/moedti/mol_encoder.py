"""GCN drug encoder with per-node MLP and max readout."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import ContractViolation
from .smiles import FEATURE_LENGTH, MolecularGraph, featurize


@dataclass
class MolBatch:
    """Several molecules packed as one disconnected graph.

    ``src``/``dst``/``coef`` list every directed edge plus one self loop per
    atom, with weight 1/sqrt((deg_u + 1)(deg_v + 1)).
    """

    features: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    coef: np.ndarray
    node_mol: np.ndarray
    n_mols: int

    @classmethod
    def from_graphs(cls, graphs: Sequence[MolecularGraph]) -> "MolBatch":
        feats, src, dst, mol = [], [], [], []
        offset = 0
        for m, g in enumerate(graphs):
            if g.n_atoms == 0:
                raise ContractViolation("cannot encode an empty molecular graph")
            feats.append(featurize(g))
            for i, j, _ in g.bonds:
                src += [offset + i, offset + j]
                dst += [offset + j, offset + i]
            idx = range(offset, offset + g.n_atoms)
            src += list(idx)
            dst += list(idx)
            mol += [m] * g.n_atoms
            offset += g.n_atoms
        src = np.array(src, dtype=np.int64)
        dst = np.array(dst, dtype=np.int64)
        deg = np.bincount(dst, minlength=offset).astype(np.float64)  # includes the self loop
        coef = 1.0 / np.sqrt(deg[src] * deg[dst])
        return cls(
            features=np.vstack(feats) if feats else np.zeros((0, FEATURE_LENGTH)),
            src=src,
            dst=dst,
            coef=coef[:, None],
            node_mol=np.array(mol, dtype=np.int64),
            n_mols=len(graphs),
        )


class MoleculeEncoder:
    def __init__(self, rng: np.random.Generator, layers: int = 3, hidden: int = 64,
                 mlp_hidden: int = 64, out_dim: int = 32, in_dim: int = FEATURE_LENGTH) -> None:
        self.weights: list[tuple[T.Tensor, T.Tensor]] = []
        width = in_dim
        for l in range(layers):
            self.weights.append((
                T.parameter((width, hidden), rng, name=f"gnn.w{l}"),
                T.parameter((1, hidden), rng, init="zeros", name=f"gnn.b{l}"),
            ))
            width = hidden
        self.readout = [
            (T.parameter((width, mlp_hidden), rng, name="gnn.mlp_w0"),
             T.parameter((1, mlp_hidden), rng, init="zeros", name="gnn.mlp_b0")),
            (T.parameter((mlp_hidden, out_dim), rng, name="gnn.mlp_w1"),
             T.parameter((1, out_dim), rng, init="zeros", name="gnn.mlp_b1")),
        ]
        self.out_dim = out_dim

    def parameters(self) -> list[T.Tensor]:
        return [p for pair in self.weights + self.readout for p in pair]

    def node_embeddings(self, batch: MolBatch, features: T.Tensor | None = None) -> T.Tensor:
        h = T.Tensor(batch.features) if features is None else features
        n = batch.features.shape[0]
        coef = T.Tensor(batch.coef)
        for w, b in self.weights:
            msg = T.embedding_lookup(h, batch.src) * coef
            agg = T.segment_sum(msg, batch.dst, n)
            h = T.relu(agg @ w + b)
        return h

    def encode_batch(self, batch: MolBatch, features: T.Tensor | None = None) -> T.Tensor:
        """(n_mols, out_dim) readout for every molecule in ``batch``."""
        h = self.node_embeddings(batch, features)
        (w0, b0), (w1, b1) = self.readout
        z = T.relu(h @ w0 + b0) @ w1 + b1
        return T.segment_max(z, batch.node_mol)

    def encode(self, graph: MolecularGraph) -> T.Tensor:
        return self.encode_batch(MolBatch.from_graphs([graph])).reshape(self.out_dim)

"""Expert classifiers, gating model, and the blended two-expert predictor."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as T
from .config import Config
from .errors import ColdEntityError, ContractViolation, DataFormatError, MissingIntrinsicError
from .kg_embed import EntityEmbeddingTable
from .mol_encoder import MolBatch, MoleculeEncoder
from .seq_encoder import ResidueFeaturizer, ResidueSequence, TargetEncoder
from .smiles import MolecularGraph

Pair = tuple[str, str]


class Mlp:
    """in -> hidden (ReLU) -> out."""

    def __init__(self, rng: np.random.Generator, n_in: int, hidden: int, n_out: int, name: str) -> None:
        self.w0 = T.parameter((n_in, hidden), rng, name=f"{name}.w0")
        self.b0 = T.parameter((1, hidden), rng, init="zeros", name=f"{name}.b0")
        self.w1 = T.parameter((hidden, n_out), rng, name=f"{name}.w1")
        self.b1 = T.parameter((1, n_out), rng, init="zeros", name=f"{name}.b1")

    def parameters(self) -> list[T.Tensor]:
        return [self.w0, self.b0, self.w1, self.b1]

    def __call__(self, x: T.Tensor) -> T.Tensor:
        if x.shape[1] != self.w0.shape[0]:
            raise ContractViolation(f"head expects width {self.w0.shape[0]}, got {x.shape[1]}")
        return T.relu(x @ self.w0 + self.b0) @ self.w1 + self.b1


class ExpertClassifier(Mlp):
    def __init__(self, rng, n_in: int, hidden: int = 64, name: str = "g") -> None:
        super().__init__(rng, n_in, hidden, 1, name)

    def logit(self, x: T.Tensor) -> T.Tensor:
        return super().__call__(x).reshape(-1)

    def __call__(self, x: T.Tensor) -> T.Tensor:
        return T.sigmoid(self.logit(x))


class GatingModel(Mlp):
    """Two logits -> softmax; the first component weights the extrinsic expert.

    The output layer starts at zero so an untrained gate mixes evenly.
    """

    def __init__(self, rng, n_in: int, hidden: int = 64, name: str = "gate") -> None:
        super().__init__(rng, n_in, hidden, 2, name)
        self.w1.data[:] = 0.0

    def components(self, x: T.Tensor) -> T.Tensor:
        return T.softmax(super().__call__(x), axis=1)

    def __call__(self, x: T.Tensor) -> T.Tensor:
        return self.components(x)[:, 0]


def unit_rows(x: T.Tensor, eps: float = 1e-8) -> T.Tensor:
    return x / (T.l2_norm(x, axis=1).reshape(-1, 1) + eps)


def blend(w: T.Tensor, p_ex: T.Tensor, p_in: T.Tensor) -> T.Tensor:
    return w * p_ex + (1.0 - w) * p_in


@dataclass
class Prediction:
    p: np.ndarray
    w: np.ndarray
    p_ex: np.ndarray
    p_in: np.ndarray
    status: list[str]


class MixtureModel:
    """Extrinsic expert, intrinsic expert and gate over a fixed drug/target universe.

    ``drugs`` and ``targets`` map ids to parsed intrinsic data; ids absent from
    them (or from the embedding table) only have one perspective available.
    """

    def __init__(self, cfg: Config, table: EntityEmbeddingTable, drugs: dict[str, MolecularGraph],
                 targets: dict[str, ResidueSequence], rng: np.random.Generator,
                 residue_features: dict[str, np.ndarray] | None = None) -> None:
        self.cfg = cfg
        self.table = table
        self.entity = T.Tensor(table.entity.copy(), requires_grad=False, name="kg.entity")
        self.drug_ids = list(drugs)
        self.target_ids = list(targets)
        self._drug_pos = {d: i for i, d in enumerate(self.drug_ids)}
        self._target_pos = {t: i for i, t in enumerate(self.target_ids)}
        d = table.dim
        self.mol_enc = MoleculeEncoder(rng, cfg.gnn.layers, cfg.gnn.hidden, cfg.gnn.mlp_hidden,
                                       cfg.gnn.out_dim)
        featurizer = (ResidueFeaturizer(e_dim=next(iter(residue_features.values())).shape[1],
                                        precomputed=residue_features)
                      if residue_features else ResidueFeaturizer(rng, cfg.cnn.e_dim))
        self.seq_enc = TargetEncoder(rng, featurizer.e_dim, cfg.cnn.channel_list, cfg.cnn.kernel,
                                     cfg.cnn.pool, cfg.cnn.out_dim, featurizer=featurizer)
        self.g_ex = ExpertClassifier(rng, 2 * d, cfg.head.hidden, name="g_ex")
        self.g_in = ExpertClassifier(rng, cfg.gnn.out_dim + cfg.cnn.out_dim, cfg.head.hidden, name="g_in")
        self.gate = GatingModel(rng, 2 * d + cfg.gnn.out_dim + cfg.cnn.out_dim, cfg.head.hidden)
        self.mol_batch = MolBatch.from_graphs([drugs[k] for k in self.drug_ids]) if drugs else None
        self.seq_batch = self.seq_enc.batch([targets[k] for k in self.target_ids]) if targets else None
        self.graphs = drugs
        self.sequences = targets

    # ------------------------------------------------------------ parameter groups
    def extrinsic_parameters(self, with_embeddings: bool = False) -> list[T.Tensor]:
        return self.g_ex.parameters() + ([self.entity] if with_embeddings else [])

    def intrinsic_parameters(self) -> list[T.Tensor]:
        return self.mol_enc.parameters() + self.seq_enc.parameters() + self.g_in.parameters()

    def gate_parameters(self) -> list[T.Tensor]:
        return self.gate.parameters()

    def named_parameters(self) -> dict[str, T.Tensor]:
        ps = self.extrinsic_parameters(True) + self.intrinsic_parameters() + self.gate_parameters()
        return {p.name: p for p in ps}

    # ------------------------------------------------------------ availability
    def extrinsic_rows(self, pairs: Sequence[Pair]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        row = self.table.row
        rd = np.array([-1 if row(d) is None else row(d) for d, _ in pairs], dtype=np.int64)
        rt = np.array([-1 if row(t) is None else row(t) for _, t in pairs], dtype=np.int64)
        return rd, rt, (rd >= 0) & (rt >= 0)

    def intrinsic_index(self, pairs: Sequence[Pair]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        idd = np.array([self._drug_pos.get(d, -1) for d, _ in pairs], dtype=np.int64)
        idt = np.array([self._target_pos.get(t, -1) for _, t in pairs], dtype=np.int64)
        return idd, idt, (idd >= 0) & (idt >= 0)

    # ------------------------------------------------------------ hidden embeddings
    def hidden_extrinsic(self, pairs: Sequence[Pair]) -> T.Tensor:
        rd, rt, ok = self.extrinsic_rows(pairs)
        if not ok.all():
            bad = pairs[int(np.flatnonzero(~ok)[0])]
            raise ColdEntityError(f"no extrinsic embedding for pair {bad}")
        return T.concat([T.embedding_lookup(self.entity, rd), T.embedding_lookup(self.entity, rt)], axis=1)

    def hidden_intrinsic(self, pairs: Sequence[Pair]) -> T.Tensor:
        idd, idt, ok = self.intrinsic_index(pairs)
        if not ok.all():
            bad = pairs[int(np.flatnonzero(~ok)[0])]
            raise MissingIntrinsicError(f"no intrinsic data for pair {bad}")
        hd = self.mol_enc.encode_batch(self.mol_batch)
        ht = self.seq_enc.encode_batch(self.seq_batch)
        return T.concat([T.embedding_lookup(hd, idd), T.embedding_lookup(ht, idt)], axis=1)

    def gate_input(self, hx: T.Tensor, hi: T.Tensor) -> T.Tensor:
        """The four hidden embeddings, each rescaled to unit length so neither side dominates."""
        d, g = self.table.dim, self.cfg.gnn.out_dim
        blocks = [hx[:, :d], hx[:, d:], hi[:, :g], hi[:, g:]]
        return T.concat([unit_rows(b) for b in blocks], axis=1)

    # ------------------------------------------------------------ heads
    def p_extrinsic(self, pairs: Sequence[Pair]) -> T.Tensor:
        return self.g_ex(self.hidden_extrinsic(pairs))

    def p_intrinsic(self, pairs: Sequence[Pair]) -> T.Tensor:
        return self.g_in(self.hidden_intrinsic(pairs))

    def forward(self, pairs: Sequence[Pair]) -> tuple[T.Tensor, T.Tensor, T.Tensor, T.Tensor]:
        """(p, w, p_ex, p_in) for pairs with both perspectives available."""
        hx = self.hidden_extrinsic(pairs)
        hi = self.hidden_intrinsic(pairs)
        p_ex = self.g_ex(hx)
        p_in = self.g_in(hi)
        w = self.gate(self.gate_input(hx, hi))
        return blend(w, p_ex, p_in), w, p_ex, p_in

    def predict(self, pairs: Sequence[Pair], mode: str = "both") -> Prediction:
        """Scores with per-pair fallback to whichever expert has data.

        ``mode`` forces single-expert inference ("intrinsic" / "extrinsic").
        Pairs with no usable perspective get NaN and status "error".
        """
        if mode not in ("both", "intrinsic", "extrinsic"):
            raise ContractViolation(f"unknown prediction mode {mode!r}")
        n = len(pairs)
        p = np.full(n, np.nan)
        w = np.full(n, np.nan)
        p_ex = np.full(n, np.nan)
        p_in = np.full(n, np.nan)
        if n == 0:
            return Prediction(p, w, p_ex, p_in, [])
        _, _, has_ex = self.extrinsic_rows(pairs)
        _, _, has_in = self.intrinsic_index(pairs)
        if mode == "intrinsic":
            has_ex = np.zeros(n, dtype=bool)
        elif mode == "extrinsic":
            has_in = np.zeros(n, dtype=bool)
        pairs = list(pairs)
        with T.no_grad():
            ex_idx = np.flatnonzero(has_ex)
            in_idx = np.flatnonzero(has_in)
            if ex_idx.size:
                hx = self.hidden_extrinsic([pairs[i] for i in ex_idx])
                p_ex[ex_idx] = self.g_ex(hx).data
            if in_idx.size:
                hi = self.hidden_intrinsic([pairs[i] for i in in_idx])
                p_in[in_idx] = self.g_in(hi).data
            both = np.flatnonzero(has_ex & has_in)
            if both.size:
                sub = [pairs[i] for i in both]
                wb = self.gate(self.gate_input(self.hidden_extrinsic(sub), self.hidden_intrinsic(sub))).data
                w[both] = wb
                p[both] = wb * p_ex[both] + (1.0 - wb) * p_in[both]
        only_ex = has_ex & ~has_in
        only_in = has_in & ~has_ex
        p[only_ex] = p_ex[only_ex]
        w[only_ex] = 1.0
        p[only_in] = p_in[only_in]
        w[only_in] = 0.0
        status = np.where(has_ex & has_in, "both",
                          np.where(only_ex, "extrinsic-only", np.where(only_in, "intrinsic-only", "error")))
        return Prediction(p, w, p_ex, p_in, status.tolist())

    # ------------------------------------------------------------ persistence
    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        missing = set(params) - set(state)
        if missing:
            raise DataFormatError(f"bundle lacks parameters {sorted(missing)[:5]}")
        for k, p in params.items():
            if state[k].shape != p.data.shape:
                raise DataFormatError(f"parameter {k} has shape {state[k].shape}, expected {p.data.shape}")
            p.data = np.array(state[k], dtype=np.float64)


def save_bundle(model: MixtureModel, path, extra: dict | None = None) -> None:
    """Single ``.npz`` file: one array per named parameter plus a JSON header."""
    meta = {
        "config": model.cfg.to_text(),
        "fingerprint": model.cfg.fingerprint(),
        "entity_ids": model.table.entity_ids,
        "relation_ids": model.table.relation_ids,
        "kg_method": model.table.method,
        "drug_ids": model.drug_ids,
        "target_ids": model.target_ids,
        "smiles": {k: g.source for k, g in model.graphs.items()},
        "sequences": {k: _decode(s) for k, s in model.sequences.items()},
    }
    if extra:
        meta.update(extra)
    arrays = {f"param/{k}": v for k, v in model.state().items()}
    arrays["kg/relation"] = model.table.relation
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def _decode(seq: ResidueSequence) -> str:
    from .seq_encoder import ALPHABET

    letters = ALPHABET + "X"
    return "".join(letters[i] for i in seq.residues)


def load_bundle(path) -> tuple[MixtureModel, dict]:
    from .config import parse_config
    from .smiles import parse_smiles

    with np.load(path) as z:
        meta = json.loads(bytes(z["meta"]).decode("utf-8"))
        state = {k[len("param/"):]: z[k] for k in z.files if k.startswith("param/")}
        relation = z["kg/relation"]
    cfg = parse_config(meta["config"])
    if cfg.fingerprint() != meta["fingerprint"]:
        raise DataFormatError("config fingerprint mismatch in bundle", path)
    table = EntityEmbeddingTable(entity=state["kg.entity"], relation=relation,
                                 entity_ids=meta["entity_ids"], relation_ids=meta["relation_ids"],
                                 method=meta["kg_method"])
    drugs = {k: parse_smiles(meta["smiles"][k]) for k in meta["drug_ids"]}
    targets = {k: ResidueSequence.from_string(k, meta["sequences"][k], cfg.cnn.max_len)
               for k in meta["target_ids"]}
    model = MixtureModel(cfg, table, drugs, targets, np.random.default_rng(0))
    model.load_state(state)
    return model, meta

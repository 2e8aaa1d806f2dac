"""Label-free entity embedding pretraining (TransE, RotatE) and the binary table format."""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractViolation, DataFormatError
from .kgraph import KnowledgeGraph, sample_negative_batch
from .optim import make_optimizer

log = logging.getLogger(__name__)

MAGIC = b"MDTIEMB1"


@dataclass
class EntityEmbeddingTable:
    entity: np.ndarray  # (|E|, d)
    relation: np.ndarray  # (|R|, d) for TransE, (|R|, d/2) phases for RotatE
    entity_ids: list[str]
    relation_ids: list[str]
    method: str = "transe"
    seed: int = 0
    epochs: int = 0
    final_loss: float = float("nan")
    loss_trace: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.entity = np.ascontiguousarray(self.entity, dtype=np.float64)
        self.relation = np.ascontiguousarray(self.relation, dtype=np.float64)
        if self.entity.shape[0] != len(self.entity_ids):
            raise ContractViolation(
                f"{self.entity.shape[0]} entity rows for {len(self.entity_ids)} ids"
            )
        if not np.isfinite(self.entity).all() or not np.isfinite(self.relation).all():
            raise ContractViolation("embedding table contains non-finite values")
        self._row = {e: i for i, e in enumerate(self.entity_ids)}

    @property
    def dim(self) -> int:
        return self.entity.shape[1]

    def row(self, entity_id: str) -> int | None:
        return self._row.get(entity_id)


def transe_distance(h: np.ndarray, r: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.linalg.norm(h + r - t, axis=-1)


def rotate_distance(h: np.ndarray, phase: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Distance of ``h`` rotated coordinate-wise by ``phase`` from ``t``.

    Vectors hold real parts in the first half and imaginary parts in the second.
    """
    k = h.shape[-1] // 2
    hr, hi = h[..., :k], h[..., k:]
    tr, ti = t[..., :k], t[..., k:]
    c, s = np.cos(phase), np.sin(phase)
    dr = hr * c - hi * s - tr
    di = hr * s + hi * c - ti
    return np.sqrt((dr ** 2).sum(-1) + (di ** 2).sum(-1))


def margin_loss(pos_dist, neg_dist, margin: float):
    return np.maximum(0.0, margin + np.asarray(pos_dist) - np.asarray(neg_dist))


def _wrap_phase(p: np.ndarray) -> np.ndarray:
    w = np.angle(np.exp(1j * p))
    return np.where(w <= -np.pi, np.pi, w)


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for s in range(0, n, batch_size):
        yield order[s : s + batch_size]


def _transe_loss(ent: T.Tensor, rel: T.Tensor, pos: np.ndarray, neg: np.ndarray, margin: float):
    def dist(tr):
        h = T.embedding_lookup(ent, tr[:, 0])
        r = T.embedding_lookup(rel, tr[:, 1])
        t = T.embedding_lookup(ent, tr[:, 2])
        return T.l2_norm(h + r - t, axis=1)

    return T.mean(T.relu(margin + dist(pos) - dist(neg)))


def _rotate_dist(ent: T.Tensor, phase: T.Tensor, tr: np.ndarray) -> T.Tensor:
    k = ent.shape[1] // 2
    h = T.embedding_lookup(ent, tr[:, 0])
    t = T.embedding_lookup(ent, tr[:, 2])
    p = T.embedding_lookup(phase, tr[:, 1])
    c, s = T.cos(p), T.sin(p)
    hr, hi = h[:, :k], h[:, k:]
    dr = hr * c - hi * s - t[:, :k]
    di = hr * s + hi * c - t[:, k:]
    return T.sqrt(T.total(dr * dr + di * di, axis=1) + 1e-12)


def _rotate_loss(ent, phase, pos, neg, margin):
    pos_term = T.log(T.sigmoid(margin - _rotate_dist(ent, phase, pos)))
    neg_term = T.log(T.sigmoid(_rotate_dist(ent, phase, neg) - margin))
    return -(T.mean(pos_term) + T.mean(neg_term)) * 0.5


def pretrain(kg: KnowledgeGraph, method: str = "transe", d: int = 32, margin: float = 1.0,
             epochs: int = 100, lr: float = 0.01, seed: int = 0, batch_size: int = 512,
             optimizer: str = "adam") -> EntityEmbeddingTable:
    if method not in ("transe", "rotate"):
        raise ConfigError(f"unknown KG embedding method {method!r}")
    if d < 2:
        raise ConfigError("embedding dimension must be >= 2")
    if method == "rotate" and d % 2:
        raise ConfigError("RotatE needs an even embedding dimension")
    if kg.triples.shape[0] == 0:
        raise ContractViolation("cannot pretrain embeddings on an empty triple set")
    if kg.leakage_mask().any():
        raise ContractViolation("KG still holds drug-target triples; filter leakage first")

    rng = np.random.default_rng(seed)
    bound = 6.0 / np.sqrt(d)
    ent = T.Tensor(rng.uniform(-bound, bound, (kg.n_entities, d)), requires_grad=True, name="entity")
    if method == "transe":
        r0 = rng.uniform(-bound, bound, (kg.n_relations, d))
        r0 /= np.linalg.norm(r0, axis=1, keepdims=True)
        rel = T.Tensor(r0, requires_grad=True, name="relation")
        ent.data /= np.linalg.norm(ent.data, axis=1, keepdims=True)
    else:
        rel = T.Tensor(rng.uniform(-np.pi, np.pi, (kg.n_relations, d // 2)), requires_grad=True,
                       name="phase")
    opt = make_optimizer(optimizer, [ent, rel], lr)
    trace = []
    for epoch in range(epochs):
        total, n = 0.0, 0
        for idx in _batches(kg.triples.shape[0], batch_size, rng):
            pos = kg.triples[idx]
            neg = sample_negative_batch(kg, pos, rng)
            T.clear_tape()
            if method == "transe":
                loss = _transe_loss(ent, rel, pos, neg, margin)
            else:
                loss = _rotate_loss(ent, rel, pos, neg, margin)
            T.backward(loss)
            opt.step()
            if method == "rotate":
                rel.data[:] = _wrap_phase(rel.data)
            total += loss.item() * len(idx)
            n += len(idx)
        if method == "transe":
            ent.data /= np.linalg.norm(ent.data, axis=1, keepdims=True)
        trace.append(total / n)
        if not np.isfinite(trace[-1]):
            raise ContractViolation(f"non-finite pretraining loss at epoch {epoch}")
    log.info("%s pretraining: first loss %.4f, last loss %.4f", method,
             trace[0] if trace else float("nan"), trace[-1] if trace else float("nan"))
    return EntityEmbeddingTable(
        entity=ent.data.copy(),
        relation=rel.data.copy(),
        entity_ids=kg.entities.items,
        relation_ids=kg.relations.items,
        method=method,
        seed=seed,
        epochs=epochs,
        final_loss=trace[-1] if trace else float("nan"),
        loss_trace=trace,
    )


def pretrain_transe(kg, d=32, margin=1.0, epochs=100, lr=0.01, seed=0, **kw) -> EntityEmbeddingTable:
    return pretrain(kg, "transe", d, margin, epochs, lr, seed, **kw)


def pretrain_rotate(kg, d=32, margin=1.0, epochs=100, lr=0.01, seed=0, **kw) -> EntityEmbeddingTable:
    return pretrain(kg, "rotate", d, margin, epochs, lr, seed, **kw)


# ---------------------------------------------------------------- file format
# magic | u32 d | u32 n_entities | u32 n_relations | u32 relation_width | i64 seed
# | u32 epochs | f64 final_loss | u16 len + method | entity f64[] | relation f64[]
# | u32 len + entity ids (utf-8, \n-joined) | u32 len + relation ids

_HEAD = struct.Struct("<IIIIqId")


def save_embeddings(table: EntityEmbeddingTable, path) -> None:
    method = table.method.encode("utf-8")
    ents = "\n".join(table.entity_ids).encode("utf-8")
    rels = "\n".join(table.relation_ids).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEAD.pack(table.dim, table.entity.shape[0], table.relation.shape[0],
                            table.relation.shape[1], table.seed, table.epochs, table.final_loss))
        fh.write(struct.pack("<H", len(method)) + method)
        fh.write(table.entity.astype("<f8").tobytes())
        fh.write(table.relation.astype("<f8").tobytes())
        fh.write(struct.pack("<I", len(ents)) + ents)
        fh.write(struct.pack("<I", len(rels)) + rels)


def load_embeddings(path, expected_entities: int | None = None,
                    expected_dim: int | None = None) -> EntityEmbeddingTable:
    buf = Path(path).read_bytes()
    if buf[: len(MAGIC)] != MAGIC:
        raise DataFormatError("not an embedding file (bad magic)", path)
    off = len(MAGIC)
    d, n_e, n_r, rw, seed, epochs, final_loss = _HEAD.unpack_from(buf, off)
    off += _HEAD.size
    if expected_entities is not None and n_e != expected_entities:
        raise DataFormatError(f"file holds {n_e} entities, expected {expected_entities}", path)
    if expected_dim is not None and d != expected_dim:
        raise DataFormatError(f"file has dimension {d}, expected {expected_dim}", path)
    (mlen,) = struct.unpack_from("<H", buf, off)
    off += 2
    method = buf[off : off + mlen].decode("utf-8")
    off += mlen
    ent = np.frombuffer(buf, dtype="<f8", count=n_e * d, offset=off).reshape(n_e, d)
    off += 8 * n_e * d
    rel = np.frombuffer(buf, dtype="<f8", count=n_r * rw, offset=off).reshape(n_r, rw)
    off += 8 * n_r * rw

    def ids(off):
        (n,) = struct.unpack_from("<I", buf, off)
        raw = buf[off + 4 : off + 4 + n].decode("utf-8")
        return (raw.split("\n") if raw else []), off + 4 + n

    entity_ids, off = ids(off)
    relation_ids, off = ids(off)
    if len(entity_ids) != n_e or len(relation_ids) != n_r:
        raise DataFormatError("id list length does not match header", path)
    return EntityEmbeddingTable(
        entity=ent.astype(np.float64), relation=rel.astype(np.float64),
        entity_ids=entity_ids, relation_ids=relation_ids, method=method,
        seed=seed, epochs=epochs, final_loss=final_loss,
    )


def check_vocabulary(table: EntityEmbeddingTable, kg: KnowledgeGraph) -> None:
    """Raise if the table was not trained on this graph's entity vocabulary."""
    if table.entity_ids != kg.entities.items:
        raise DataFormatError(
            f"embedding vocabulary ({len(table.entity_ids)} ids) does not match the KG "
            f"({kg.n_entities} entities)"
        )

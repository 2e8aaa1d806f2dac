"""1-D CNN target encoder over per-residue vectors with adaptive max pooling."""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import ContractViolation, DataFormatError

log = logging.getLogger(__name__)

ALPHABET = "ACDEFGHIKLMNPQRSTVWY"
UNKNOWN = len(ALPHABET)  # index of the X bucket
_INDEX = {c: i for i, c in enumerate(ALPHABET)}


@dataclass
class ResidueSequence:
    target_id: str
    residues: np.ndarray
    truncated: int = 0

    @classmethod
    def from_string(cls, target_id: str, seq: str, max_len: int = 2000) -> "ResidueSequence":
        seq = seq.strip().upper()
        if not seq:
            raise ContractViolation(f"empty sequence for target {target_id}")
        idx = np.array([_INDEX.get(c, UNKNOWN) for c in seq], dtype=np.int64)
        cut = max(0, idx.size - max_len)
        if cut:
            log.info("target %s truncated from %d to %d residues", target_id, idx.size, max_len)
            idx = idx[:max_len]
        return cls(target_id, idx, cut)

    def __len__(self) -> int:
        return int(self.residues.size)


class ResidueFeaturizer:
    """Learned 21 x e_dim table, or fixed per-target vectors loaded from a file."""

    def __init__(self, rng: np.random.Generator | None = None, e_dim: int = 16,
                 precomputed: dict[str, np.ndarray] | None = None) -> None:
        self.e_dim = e_dim
        self.precomputed = precomputed
        if precomputed is None:
            rng = rng or np.random.default_rng(0)
            self.table = T.Tensor(rng.normal(0, 1.0, (UNKNOWN + 1, e_dim)), requires_grad=True,
                                  name="cnn.residue_table")
        else:
            self.table = None
            for tid, mat in precomputed.items():
                if mat.ndim != 2 or mat.shape[1] != e_dim:
                    raise DataFormatError(f"precomputed features for {tid} have shape {mat.shape}, "
                                          f"expected (M, {e_dim})")

    def parameters(self) -> list[T.Tensor]:
        return [] if self.table is None else [self.table]

    def vectors(self, seq: ResidueSequence) -> np.ndarray | None:
        if self.precomputed is None:
            return None
        mat = self.precomputed.get(seq.target_id)
        if mat is None:
            raise DataFormatError(f"no precomputed residue features for target {seq.target_id}")
        return mat[: len(seq)]


@dataclass
class SeqBatch:
    """Sequences laid end to end with zero gaps so one conv pass serves all of them."""

    residues: np.ndarray  # residue index per position (gap positions hold 0)
    mask: np.ndarray  # (L, 1) 1 on residues, 0 on gaps
    starts: np.ndarray
    lengths: np.ndarray
    dense: np.ndarray | None = None  # (L, e_dim) when features are precomputed

    @classmethod
    def from_sequences(cls, seqs: Sequence[ResidueSequence], gap: int,
                       featurizer: ResidueFeaturizer | None = None) -> "SeqBatch":
        res, mask, starts, lengths, dense = [], [], [], [], []
        pos = 0
        for i, s in enumerate(seqs):
            if len(s) == 0:
                raise ContractViolation(f"empty sequence for target {s.target_id}")
            if i:
                res.append(np.zeros(gap, dtype=np.int64))
                mask.append(np.zeros(gap))
                pos += gap
            starts.append(pos)
            lengths.append(len(s))
            res.append(s.residues)
            mask.append(np.ones(len(s)))
            pos += len(s)
            if featurizer is not None and featurizer.precomputed is not None:
                if i:
                    dense.append(np.zeros((gap, featurizer.e_dim)))
                dense.append(featurizer.vectors(s))
        return cls(
            residues=np.concatenate(res),
            mask=np.concatenate(mask)[:, None],
            starts=np.array(starts, dtype=np.int64),
            lengths=np.array(lengths, dtype=np.int64),
            dense=np.vstack(dense) if dense else None,
        )


def pool_ranges(starts: np.ndarray, lengths: np.ndarray, out_len: int) -> tuple[np.ndarray, np.ndarray]:
    s_all, e_all = [], []
    for s, m in zip(starts, lengths):
        a, b = T.adaptive_pool_bounds(int(m), out_len)
        s_all.append(a + s)
        e_all.append(b + s)
    return np.concatenate(s_all), np.concatenate(e_all)


class TargetEncoder:
    def __init__(self, rng: np.random.Generator, e_dim: int = 16, channels: Sequence[int] = (16, 32, 32),
                 kernel: int = 5, pool: int = 8, out_dim: int = 32,
                 featurizer: ResidueFeaturizer | None = None) -> None:
        self.featurizer = featurizer or ResidueFeaturizer(rng, e_dim)
        self.kernel = kernel
        self.pool = pool
        self.out_dim = out_dim
        self.convs: list[tuple[T.Tensor, T.Tensor]] = []
        width = self.featurizer.e_dim
        for l, c in enumerate(channels):
            self.convs.append((
                T.parameter((kernel, width, c), rng, name=f"cnn.k{l}"),
                T.parameter((1, c), rng, init="zeros", name=f"cnn.b{l}"),
            ))
            width = c
        self.proj_w = T.parameter((pool * width, out_dim), rng, name="cnn.proj_w")
        self.proj_b = T.parameter((1, out_dim), rng, init="zeros", name="cnn.proj_b")

    @property
    def gap(self) -> int:
        return self.kernel - 1

    def parameters(self) -> list[T.Tensor]:
        ps = self.featurizer.parameters()
        for k, b in self.convs:
            ps += [k, b]
        return ps + [self.proj_w, self.proj_b]

    def batch(self, seqs: Sequence[ResidueSequence]) -> SeqBatch:
        return SeqBatch.from_sequences(seqs, self.gap, self.featurizer)

    def encode_batch(self, batch: SeqBatch) -> T.Tensor:
        """(n_targets, out_dim) embedding for every sequence in ``batch``."""
        mask = T.Tensor(batch.mask)
        if batch.dense is not None:
            x = T.Tensor(batch.dense)
        else:
            x = T.embedding_lookup(self.featurizer.table, batch.residues) * mask
        for k, b in self.convs:
            x = T.relu(T.conv1d(x, k) + b) * mask
        starts, ends = pool_ranges(batch.starts, batch.lengths, self.pool)
        pooled = T.range_max(x, starts, ends)
        flat = pooled.reshape(len(batch.starts), -1)
        return flat @ self.proj_w + self.proj_b

    def encode(self, seq: ResidueSequence) -> T.Tensor:
        return self.encode_batch(self.batch([seq])).reshape(self.out_dim)


# precomputed feature file: magic | u32 e_dim | u32 n_targets | per target:
# u16 id length, id bytes, u32 M, f64[M * e_dim]
_FEAT_MAGIC = b"MDTIRES1"


def save_residue_features(features: dict[str, np.ndarray], path) -> None:
    dims = {m.shape[1] for m in features.values()}
    if len(dims) != 1:
        raise DataFormatError("all residue feature matrices must share one width")
    (e_dim,) = dims
    with open(path, "wb") as fh:
        fh.write(_FEAT_MAGIC + struct.pack("<II", e_dim, len(features)))
        for tid, mat in features.items():
            b = tid.encode("utf-8")
            fh.write(struct.pack("<H", len(b)) + b + struct.pack("<I", mat.shape[0]))
            fh.write(np.ascontiguousarray(mat, dtype="<f8").tobytes())


def load_residue_features(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:8] != _FEAT_MAGIC:
        raise DataFormatError("not a residue feature file (bad magic)", path)
    e_dim, n = struct.unpack_from("<II", buf, 8)
    off = 16
    out = {}
    for _ in range(n):
        (ln,) = struct.unpack_from("<H", buf, off)
        tid = buf[off + 2 : off + 2 + ln].decode("utf-8")
        off += 2 + ln
        (m,) = struct.unpack_from("<I", buf, off)
        off += 4
        out[tid] = np.frombuffer(buf, dtype="<f8", count=m * e_dim, offset=off).reshape(m, e_dim).copy()
        off += 8 * m * e_dim
    return out

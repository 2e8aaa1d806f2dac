"""Knowledge-graph loading, drug/target leakage filtering, negative sampling."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ContractViolation, DataFormatError, MissingEntityError

log = logging.getLogger(__name__)


class Vocab:
    """Insertion-ordered string <-> index mapping."""

    def __init__(self, items: Iterable[str] = ()) -> None:
        self._index: dict[str, int] = {}
        self._items: list[str] = []
        for it in items:
            self.add(it)

    def add(self, item: str) -> int:
        idx = self._index.get(item)
        if idx is None:
            idx = len(self._items)
            self._index[item] = idx
            self._items.append(item)
        return idx

    def __getitem__(self, item: str) -> int:
        return self._index[item]

    def get(self, item: str, default=None):
        return self._index.get(item, default)

    def __contains__(self, item: str) -> bool:
        return item in self._index

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def name(self, idx: int) -> str:
        return self._items[idx]

    @property
    def items(self) -> list[str]:
        return list(self._items)


@dataclass
class KnowledgeGraph:
    entities: Vocab
    relations: Vocab
    triples: np.ndarray  # (n, 3) int64: head, relation, tail
    drugs: frozenset[int] = frozenset()
    targets: frozenset[int] = frozenset()
    removed_leakage: int = 0
    _triple_set: set = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.triples = np.asarray(self.triples, dtype=np.int64).reshape(-1, 3)
        n_e, n_r = len(self.entities), len(self.relations)
        if self.triples.size:
            h, r, t = self.triples.T
            if h.min() < 0 or t.min() < 0 or max(h.max(), t.max()) >= n_e:
                raise ContractViolation("triple references an unknown entity index")
            if r.min() < 0 or r.max() >= n_r:
                raise ContractViolation("triple references an unknown relation index")
        if any(i < 0 or i >= n_e for i in self.drugs | self.targets):
            raise ContractViolation("drug/target index outside the entity vocabulary")
        self._triple_set = set(map(tuple, self.triples.tolist()))

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def __contains__(self, triple) -> bool:
        return tuple(int(x) for x in triple) in self._triple_set

    def stats(self) -> dict[str, int]:
        return {
            "entities": self.n_entities,
            "relations": self.n_relations,
            "triples": int(self.triples.shape[0]),
            "drugs": len(self.drugs),
            "targets": len(self.targets),
            "removed_leakage": self.removed_leakage,
        }

    def leakage_mask(self) -> np.ndarray:
        """Boolean mask of triples joining a drug and a target in either direction."""
        if not self.triples.size:
            return np.zeros(0, dtype=bool)
        h, t = self.triples[:, 0], self.triples[:, 2]
        d = np.zeros(self.n_entities, dtype=bool)
        g = np.zeros(self.n_entities, dtype=bool)
        d[list(self.drugs)] = True
        g[list(self.targets)] = True
        return (d[h] & g[t]) | (g[h] & d[t])


def _read_ids(path: Path) -> list[str]:
    ids = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                ids.append(line)
    return ids


def build_kg(triples: Iterable[tuple[str, str, str]], drugs: Iterable[str] = (),
             targets: Iterable[str] = ()) -> KnowledgeGraph:
    """Build a graph from string triples, deduplicating and registering ids in first-seen order."""
    entities, relations = Vocab(), Vocab()
    seen: set[tuple[int, int, int]] = set()
    rows: list[tuple[int, int, int]] = []
    for h, r, t in triples:
        key = (entities.add(h), relations.add(r), entities.add(t))
        if key not in seen:
            seen.add(key)
            rows.append(key)
    drug_ids = list(drugs)
    target_ids = list(targets)
    for i in drug_ids + target_ids:
        entities.add(i)
    return KnowledgeGraph(
        entities=entities,
        relations=relations,
        triples=np.array(rows, dtype=np.int64).reshape(-1, 3),
        drugs=frozenset(entities[i] for i in drug_ids),
        targets=frozenset(entities[i] for i in target_ids),
    )


def load_kg(triples_path, drugs_path, targets_path) -> KnowledgeGraph:
    """Read a head/relation/tail TSV plus drug and target id lists.

    Drug and target ids must occur in the triple file, otherwise
    ``MissingEntityError`` lists them.
    """
    triples_path = Path(triples_path)
    raw = []
    with open(triples_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = [p.strip() for p in line.split("\t")]
            if len(parts) != 3 or not all(parts):
                raise DataFormatError(
                    f"expected 3 tab-separated fields, got {len(parts)}", triples_path, lineno
                )
            raw.append(tuple(parts))
    kg = build_kg(raw)
    drugs = _read_ids(Path(drugs_path))
    targets = _read_ids(Path(targets_path))
    missing = [i for i in drugs + targets if i not in kg.entities]
    if missing:
        raise MissingEntityError("drug/target", missing)
    kg = KnowledgeGraph(
        entities=kg.entities,
        relations=kg.relations,
        triples=kg.triples,
        drugs=frozenset(kg.entities[i] for i in drugs),
        targets=frozenset(kg.entities[i] for i in targets),
    )
    log.info("loaded KG: %s (%d raw lines)", kg.stats(), len(raw))
    return kg


def remove_dti_leakage(kg: KnowledgeGraph) -> KnowledgeGraph:
    """Drop every triple with (head in D, tail in T) or (head in T, tail in D)."""
    mask = kg.leakage_mask()
    removed = int(mask.sum())
    if removed:
        log.info("removed %d drug-target triples", removed)
    return KnowledgeGraph(
        entities=kg.entities,
        relations=kg.relations,
        triples=kg.triples[~mask],
        drugs=kg.drugs,
        targets=kg.targets,
        removed_leakage=kg.removed_leakage + removed,
    )


def sample_negative_triple(kg: KnowledgeGraph, triple, rng: np.random.Generator,
                           max_tries: int = 100, side: str | None = None) -> tuple[int, int, int]:
    """Corrupt head or tail (fair coin unless ``side`` is given) with a uniform entity.

    Draws that land on an observed triple are rejected; after ``max_tries``
    rejections the last candidate is accepted.
    """
    n = kg.n_entities
    if n < 2:
        raise ContractViolation("negative sampling needs at least two entities")
    h, r, t = (int(x) for x in triple)
    corrupt_head = rng.random() < 0.5 if side is None else side == "head"
    cand = (h, r, t)
    for _ in range(max_tries):
        e = int(rng.integers(n))
        cand = (e, r, t) if corrupt_head else (h, r, e)
        if cand != (h, r, t) and cand not in kg._triple_set:
            break
    return cand


def sample_negative_batch(kg: KnowledgeGraph, triples: np.ndarray, rng: np.random.Generator,
                          max_tries: int = 100) -> np.ndarray:
    """Vectorised ``sample_negative_triple`` over many triples (same filtering rule)."""
    n = kg.n_entities
    if n < 2:
        raise ContractViolation("negative sampling needs at least two entities")
    out = triples.copy()
    heads = rng.random(len(triples)) < 0.5
    pending = np.arange(len(triples))
    for _ in range(max_tries):
        if pending.size == 0:
            break
        ents = rng.integers(n, size=pending.size)
        rows = triples[pending].copy()
        col = np.where(heads[pending], 0, 2)
        rows[np.arange(pending.size), col] = ents
        out[pending] = rows
        bad = np.array(
            [tuple(row) in kg._triple_set for row in rows.tolist()], dtype=bool
        )
        pending = pending[bad]
    return out

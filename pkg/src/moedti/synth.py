"""Planted-signal synthetic benchmark in the same file formats as real data.

Every drug and target belongs to one of ``communities`` groups; the lower
half of the groups are "active". A pair interacts iff both sides sit in
active communities, or the drug carries the special motif and the target
carries the special k-mer. The KG reflects communities
(except for cold entities, whose edges are random); SMILES and sequences
reflect communities only with probability ``intrinsic_fidelity`` and are
the only carriers of the special motif/k-mer.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import SynthConfig
from .errors import ConfigError

COMMUNITY_MOTIFS = ("c1ccncc1", "C1CCOCC1", "C(=O)OC", "c1ccsc1", "C1CCNC1", "C(=O)NC", "c1ccoc1",
                    "C1CCCC1")
SPECIAL_MOTIF = "S(=O)(=O)N"
FILLERS = ("C", "CC", "C(C)", "CO", "CN", "C(F)", "c1ccccc1", "CCC", "C(Cl)")
COMMUNITY_KMERS = ("WHCMW", "YCWHM", "MHYWC", "CWMYH", "HMWCY", "WYMHC", "CHYMW", "MWCHY")
SPECIAL_KMER = "FWKWF"
BACKGROUND = "ADEGIKLNPQRSTV"  # residues absent from the planted k-mers

FILES = {
    "triples": "triples.tsv",
    "drugs": "drugs.txt",
    "targets": "targets.txt",
    "smiles": "smiles.tsv",
    "sequences": "sequences.tsv",
    "positives": "positives.tsv",
    "negatives": "negatives.tsv",
    "oracle": "oracle.tsv",
}


@dataclass
class SyntheticWorld:
    config: SynthConfig
    drug_ids: list[str]
    target_ids: list[str]
    other_ids: list[str]
    community: dict[str, int]
    motif_community: dict[str, int]  # community whose motif/k-mer the entity actually carries
    special: dict[str, bool]
    cold: set[str]
    triples: list[tuple[str, str, str]]
    smiles: dict[str, str]
    sequences: dict[str, str]
    leaked: int = 0
    extra: dict = field(default_factory=dict)

    def compatible(self, drug: str, target: str) -> bool:
        half = self.config.communities // 2
        return self.community[drug] < half and self.community[target] < half

    def oracle_label(self, drug: str, target: str) -> int:
        return int(self.compatible(drug, target) or (self.special[drug] and self.special[target]))

    def all_pairs(self) -> list[tuple[str, str, int]]:
        return [(d, t, self.oracle_label(d, t)) for d in self.drug_ids for t in self.target_ids]

    def base_rate(self) -> float:
        labels = [l for _, _, l in self.all_pairs()]
        return sum(labels) / len(labels)

    def write(self, directory) -> dict[str, Path]:
        """Write every file the real-data path reads; returns the paths by role."""
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        paths = {k: out / v for k, v in FILES.items()}
        _write_lines(paths["triples"], ("\t".join(t) for t in self.triples))
        _write_lines(paths["drugs"], self.drug_ids)
        _write_lines(paths["targets"], self.target_ids)
        _write_lines(paths["smiles"], (f"{d}\t{self.smiles[d]}" for d in self.drug_ids))
        _write_lines(paths["sequences"], (f"{t}\t{self.sequences[t]}" for t in self.target_ids))
        pairs = self.all_pairs()
        _write_lines(paths["positives"], (f"{d}\t{t}" for d, t, l in pairs if l))
        _write_lines(paths["negatives"], (f"{d}\t{t}" for d, t, l in pairs if not l))
        rows = ["id\tkind\tcommunity\tcarried\tspecial\tcold"]
        for kind, ids in (("drug", self.drug_ids), ("target", self.target_ids)):
            for i in ids:
                rows.append(f"{i}\t{kind}\t{self.community[i]}\t{self.motif_community[i]}\t"
                            f"{int(self.special[i])}\t{int(i in self.cold)}")
        _write_lines(paths["oracle"], rows)
        return paths


def _write_lines(path: Path, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


def _carried(rng, own: int, k: int, fidelity: float) -> int:
    if k == 1 or rng.random() < fidelity:
        return own
    return int(rng.choice([c for c in range(k) if c != own]))


def _make_smiles(rng, motif: str, special: bool) -> str:
    pieces = [motif] + [FILLERS[i] for i in rng.integers(len(FILLERS), size=int(rng.integers(1, 4)))]
    if special:
        pieces.append(SPECIAL_MOTIF)
    order = rng.permutation(len(pieces))
    return "C" + "".join(pieces[i] for i in order)


def _make_sequence(rng, kmer: str, special: bool) -> str:
    n = int(rng.integers(60, 151))
    seq = list(rng.choice(list(BACKGROUND), size=n))
    inserts = [kmer, kmer] + ([SPECIAL_KMER] if special else [])
    for piece in inserts:
        pos = int(rng.integers(0, len(seq) + 1))
        seq[pos:pos] = list(piece)
    return "M" + "".join(seq)


def generate_synthetic_world(cfg: SynthConfig | None = None, seed: int | None = None) -> SyntheticWorld:
    cfg = cfg or SynthConfig()
    k = cfg.communities
    if k < 2 or k > len(COMMUNITY_MOTIFS):
        raise ConfigError(f"synth.communities must lie in [2, {len(COMMUNITY_MOTIFS)}]")
    if min(cfg.n_drugs, cfg.n_targets, cfg.n_other) < k:
        raise ConfigError("each entity group needs at least one member per community")
    if not 0 <= cfg.intrinsic_fidelity <= 1 or not 0 <= cfg.cold_fraction <= 1:
        raise ConfigError("fidelity and cold fraction must lie in [0, 1]")
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    drugs = [f"DRUG{i:03d}" for i in range(cfg.n_drugs)]
    targets = [f"GENE{i:03d}" for i in range(cfg.n_targets)]
    others = [f"ENT{i:04d}" for i in range(cfg.n_other)]
    community: dict[str, int] = {}
    for group in (drugs, targets, others):
        labels = np.arange(len(group)) % k
        rng.shuffle(labels)
        community.update(zip(group, labels.tolist()))
    special = {d: bool(rng.random() < cfg.motif_rate) for d in drugs}
    special.update({t: bool(rng.random() < cfg.kmer_rate) for t in targets})
    carried = {e: _carried(rng, community[e], k, cfg.intrinsic_fidelity) for e in drugs + targets}
    n_cold_d = int(round(cfg.cold_fraction * len(drugs)))
    n_cold_t = int(round(cfg.cold_fraction * len(targets)))
    cold = set(rng.choice(drugs, n_cold_d, replace=False).tolist()) | set(
        rng.choice(targets, n_cold_t, replace=False).tolist())

    by_comm = {c: [o for o in others if community[o] == c] for c in range(k)}
    triples: list[tuple[str, str, str]] = []

    def link(src, rel, n_edges, noise):
        for _ in range(n_edges):
            if src in cold or rng.random() < noise:
                dst = others[int(rng.integers(len(others)))]
            else:
                pool = by_comm[community[src]]
                dst = pool[int(rng.integers(len(pool)))]
            if dst != src:
                triples.append((src, rel, dst))

    for d in drugs:
        link(d, "drug_assoc", 5, 0.1)
    for t in targets:
        link(t, "gene_assoc", 5, 0.1)
    for o in others:
        link(o, "related_to", 3, 0.1)

    # direct drug-target edges that the leakage filter must remove
    half = k // 2
    leaked = 0
    for d in drugs:
        for t in targets:
            hit = community[d] < half and community[t] < half
            if (hit or (special[d] and special[t])) and rng.random() < 0.1:
                triples.append((d, "interacts", t) if rng.random() < 0.5 else (t, "interacted_by", d))
                leaked += 1

    smiles = {d: _make_smiles(rng, COMMUNITY_MOTIFS[carried[d]], special[d]) for d in drugs}
    sequences = {t: _make_sequence(rng, COMMUNITY_KMERS[carried[t]], special[t]) for t in targets}
    return SyntheticWorld(cfg, drugs, targets, others, community, carried, special, cold, triples,
                          smiles, sequences, leaked)

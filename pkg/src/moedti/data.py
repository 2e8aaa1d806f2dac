"""DTI dataset files: pair lists, SMILES and sequence tables, few-shot splits."""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .errors import ContractViolation, DataFormatError
from .seq_encoder import ResidueSequence
from .smiles import SmilesError, parse_smiles
from .synergy import DtiDataset

log = logging.getLogger(__name__)


def read_table(path, n_fields: int = 2) -> list[tuple[str, ...]]:
    """Tab-separated rows with exactly ``n_fields`` non-empty fields; '#' lines skipped."""
    path = Path(path)
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split("\t")]
            if len(parts) != n_fields or not all(parts):
                raise DataFormatError(f"expected {n_fields} tab-separated fields", path, lineno)
            rows.append(tuple(parts))
    return rows


def read_pairs(path) -> list[tuple[str, str]]:
    seen, out = set(), []
    for d, t in read_table(path):
        if (d, t) not in seen:
            seen.add((d, t))
            out.append((d, t))
    return out


def read_mapping(path) -> dict[str, str]:
    out: dict[str, str] = {}
    for k, v in read_table(path):
        if k in out and out[k] != v:
            raise DataFormatError(f"conflicting entries for {k}", path)
        out[k] = v
    return out


def write_pairs(path, pairs) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for d, t in pairs:
            fh.write(f"{d}\t{t}\n")


def load_dti_dataset(pairs_pos, pairs_neg, smiles, sequences, shots: int, seed: int,
                     test_negative_ratio: float = 1.0, max_len: int = 2000) -> DtiDataset:
    """Few-shot split: ``shots`` positives and as many negatives train, the rest test.

    Test negatives are drawn uniformly at ``test_negative_ratio`` per test
    positive. When the negative file is absent or too short, negatives come
    from unlabeled pairs and the dataset notes say so. Pairs whose drug or
    target lacks usable intrinsic data are dropped with a warning.
    """
    notes: list[str] = []
    drugs, bad = {}, []
    for d, s in read_mapping(smiles).items():
        try:
            drugs[d] = parse_smiles(s)
        except SmilesError as exc:
            bad.append(f"{d} ({exc})")
    targets = {t: ResidueSequence.from_string(t, s, max_len) for t, s in read_mapping(sequences).items()}
    if bad:
        notes.append(f"unparseable SMILES for {len(bad)} drugs: {', '.join(bad[:5])}")

    def keep(pairs, kind):
        ok = [p for p in pairs if p[0] in drugs and p[1] in targets]
        if len(ok) < len(pairs):
            missing = sorted({x for p in pairs for x in p if x not in drugs and x not in targets})
            msg = f"dropped {len(pairs) - len(ok)} {kind} pairs lacking intrinsic data ({', '.join(missing[:5])})"
            log.warning(msg)
            notes.append(msg)
        return ok

    pos = keep(read_pairs(pairs_pos), "positive")
    neg = keep(read_pairs(pairs_neg), "negative") if pairs_neg is not None else []
    if set(pos) & set(neg):
        raise DataFormatError("some pairs appear in both the positive and negative files")
    if shots < 1 or shots > len(pos):
        raise ContractViolation(f"{shots} shots requested but {len(pos)} positives available")

    rng = np.random.default_rng(seed)
    pos = [pos[i] for i in rng.permutation(len(pos))]
    neg = [neg[i] for i in rng.permutation(len(neg))]
    train_pos, test_pos = pos[:shots], pos[shots:]
    n_test_neg = int(round(test_negative_ratio * len(test_pos)))
    if len(neg) < shots + n_test_neg:
        labeled = set(pos) | set(neg)
        pool = [(d, t) for d in drugs for t in targets if (d, t) not in labeled]
        extra = shots + n_test_neg - len(neg)
        if extra > len(pool):
            raise ContractViolation("not enough unlabeled pairs to draw negatives from")
        idx = np.sort(rng.choice(len(pool), size=extra, replace=False))
        neg += [pool[i] for i in idx]
        notes.append(f"{extra} negatives sampled from unlabeled pairs")
    train_neg = neg[:shots]
    test_neg = neg[shots : shots + n_test_neg]
    test_pairs = test_pos + test_neg
    labels = np.r_[np.ones(len(test_pos)), np.zeros(len(test_neg))].astype(np.int64)
    notes.append(f"test negatives sampled {test_negative_ratio:g}:1 with seed {seed}")
    return DtiDataset(positives=train_pos, negatives=train_neg, drugs=drugs, targets=targets,
                      shots=shots, test_pairs=test_pairs, test_labels=labels, notes=notes)

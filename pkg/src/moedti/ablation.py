"""Six-variant ablation over shot counts and seeds, with CSV reports."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import Config
from .data import load_dti_dataset
from .errors import ContractViolation, MoeDtiError
from .kg_embed import EntityEmbeddingTable, pretrain
from .kgraph import KnowledgeGraph, load_kg, remove_dti_leakage
from .metrics import EvalRow, compute_metrics
from .moe import MixtureModel
from .synergy import DtiDataset, run_training
from .synth import FILES

log = logging.getLogger(__name__)

# variant -> (prediction mode, availability tag)
VARIANTS = {
    "True-intr": ("intrinsic", "intrinsic-only"),
    "True-extr": ("extrinsic", "extrinsic-only"),
    "True-all": ("both", "both"),
    "Mose-intr": ("intrinsic", "intrinsic-only"),
    "Mose-extr": ("extrinsic", "extrinsic-only"),
    "MoseDTI": ("both", "both"),
}
# ground-truth-only variants are read off the plain run right after the step that trains them
SNAPSHOT_STEP = {"True-intr": "S2", "True-extr": "S3", "True-all": "S4"}
METRIC_FIELDS = ("variant", "dataset", "shots", "availability", "seed", "ACC", "AUC", "AUPR",
                 "n_pairs", "status")
PROTOCOL = "test negatives drawn uniformly 1:1 with test positives; ACC threshold 0.5"


@dataclass
class DataPaths:
    triples: Path
    drugs: Path
    targets: Path
    smiles: Path
    sequences: Path
    positives: Path
    negatives: Path | None = None

    @classmethod
    def from_dir(cls, directory) -> "DataPaths":
        d = Path(directory)
        neg = d / FILES["negatives"]
        return cls(*(d / FILES[k] for k in ("triples", "drugs", "targets", "smiles", "sequences",
                                           "positives")), neg if neg.exists() else None)


@dataclass
class ResultRow:
    variant: str
    dataset: str
    shots: int
    seed: int
    metrics: EvalRow | None
    status: str = "ok"

    @property
    def availability(self) -> str:
        return VARIANTS[self.variant][1]


def prepare_embeddings(paths: DataPaths, cfg: Config) -> tuple[KnowledgeGraph, EntityEmbeddingTable]:
    kg = remove_dti_leakage(load_kg(paths.triples, paths.drugs, paths.targets))
    table = pretrain(kg, cfg.kg.method, cfg.kg.dim, cfg.kg.margin, cfg.kg.epochs, cfg.kg.lr,
                     cfg.kg.seed, batch_size=cfg.kg.batch_size)
    return kg, table


def evaluate(model: MixtureModel, ds: DtiDataset, mode: str, threshold: float = 0.5) -> EvalRow:
    """Metrics over test pairs the requested perspective can score."""
    pred = model.predict(ds.test_pairs, mode=mode)
    ok = ~np.isnan(pred.p)
    if ok.sum() < 2:
        raise ContractViolation(f"only {int(ok.sum())} test pairs scorable in {mode} mode")
    return compute_metrics(pred.p[ok], ds.test_labels[ok], threshold)


def run_variants(ds: DtiDataset, table: EntityEmbeddingTable, cfg: Config, seed: int
                 ) -> dict[str, EvalRow | Exception]:
    out: dict[str, EvalRow | Exception] = {}
    thr = cfg.eval.threshold

    def snap(step, model):
        for name, s in SNAPSHOT_STEP.items():
            if s == step:
                out[name] = evaluate(model, ds, VARIANTS[name][0], thr)

    try:
        run_training(ds, table, cfg, seed=seed, use_pseudo=False, on_step=snap)
    except MoeDtiError as exc:
        log.error("ground-truth-only run failed (seed %d): %s", seed, exc)
        for name in SNAPSHOT_STEP:
            out.setdefault(name, exc)
    try:
        res = run_training(ds, table, cfg, seed=seed, use_pseudo=True)
        for name in ("Mose-intr", "Mose-extr", "MoseDTI"):
            out[name] = evaluate(res.model, ds, VARIANTS[name][0], thr)
    except MoeDtiError as exc:
        log.error("pseudo-label run failed (seed %d): %s", seed, exc)
        for name in ("Mose-intr", "Mose-extr", "MoseDTI"):
            out.setdefault(name, exc)
    return out


def run_ablation(paths: DataPaths, cfg: Config, shots: list[int], seeds: list[int],
                 dataset: str = "synthetic", table: EntityEmbeddingTable | None = None) -> list[ResultRow]:
    """Every variant under every (shots, seed); KG embeddings are pretrained once."""
    if not seeds:
        raise ContractViolation("run_ablation needs at least one seed")
    cfg.validate()
    if table is None:
        _, table = prepare_embeddings(paths, cfg)
    rows: list[ResultRow] = []
    for n_shots in shots:
        for seed in seeds:
            ds = load_dti_dataset(paths.positives, paths.negatives, paths.smiles, paths.sequences,
                                  n_shots, seed, cfg.eval.test_negative_ratio, cfg.cnn.max_len)
            results = run_variants(ds, table, cfg, seed)
            for name in VARIANTS:
                r = results[name]
                if isinstance(r, Exception):
                    rows.append(ResultRow(name, dataset, n_shots, seed, None, f"error: {r}"))
                else:
                    rows.append(ResultRow(name, dataset, n_shots, seed, r))
            log.info("shots %d seed %d: %s", n_shots, seed,
                     {k: round(v.auc, 4) for k, v in results.items() if isinstance(v, EvalRow)})
    return rows


def _fmt(x: float) -> str:
    return "nan" if x is None or math.isnan(x) else f"{x:.6f}"


def _header(fh, cfg: Config) -> None:
    fh.write(f"# config fingerprint {cfg.fingerprint()}\n")
    fh.write(f"# protocol: {PROTOCOL}\n")
    for line in cfg.to_text().splitlines():
        fh.write(f"# {line}\n")


def write_metrics_csv(rows: list[ResultRow], path, cfg: Config) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _header(fh, cfg)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_FIELDS)
        for r in rows:
            m = r.metrics
            w.writerow([r.variant, r.dataset, r.shots, r.availability, r.seed,
                        _fmt(m.acc if m else math.nan), _fmt(m.auc if m else math.nan),
                        _fmt(m.aupr if m else math.nan), m.n if m else 0, r.status])


def summarize(rows: list[ResultRow]) -> list[dict]:
    """Mean and population std over seeds per (dataset, shots, variant); errors excluded."""
    groups: dict[tuple, list[ResultRow]] = {}
    for r in rows:
        groups.setdefault((r.dataset, r.shots, r.variant), []).append(r)
    out = []
    for (dataset, shots, variant), grp in groups.items():
        good = [g.metrics for g in grp if g.metrics is not None]
        entry = {"variant": variant, "dataset": dataset, "shots": shots,
                 "availability": VARIANTS[variant][1], "n_seeds": len(good), "n_failed": len(grp) - len(good)}
        for key in ("acc", "auc", "aupr"):
            vals = np.array([getattr(m, key) for m in good], dtype=np.float64)
            entry[f"{key.upper()}_mean"] = float(vals.mean()) if vals.size else math.nan
            entry[f"{key.upper()}_std"] = float(vals.std()) if vals.size else math.nan
            entry[f"{key.upper()}_median"] = float(np.median(vals)) if vals.size else math.nan
        out.append(entry)
    return out


def write_summary_csv(rows: list[ResultRow], path, cfg: Config) -> list[dict]:
    summary = summarize(rows)
    fields = ["variant", "dataset", "shots", "availability", "n_seeds", "n_failed"]
    for key in ("ACC", "AUC", "AUPR"):
        fields += [f"{key}_mean", f"{key}_std"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _header(fh, cfg)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields + ["ACC", "AUC", "AUPR"])
        for s in summary:
            pm = [f"{_fmt(s[k + '_mean'])} ± {_fmt(s[k + '_std'])}" for k in ("ACC", "AUC", "AUPR")]
            w.writerow([s[f] if isinstance(s[f], (int, str)) else _fmt(s[f]) for f in fields] + pm)
    return summary

"""Pseudo-label exchange between the two experts and the four-step training loop."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import tensor as T
from .config import Config
from .errors import ContractViolation, PseudoLabelError
from .kg_embed import EntityEmbeddingTable
from .moe import MixtureModel, Pair
from .optim import make_optimizer
from .seq_encoder import ResidueSequence
from .smiles import MolecularGraph

log = logging.getLogger(__name__)

EPS = 1e-12  # probability clip inside the log terms


@dataclass
class DtiDataset:
    """Labeled training pairs plus intrinsic data; the held-out test set rides along."""

    positives: list[Pair]
    negatives: list[Pair]
    drugs: dict[str, MolecularGraph]
    targets: dict[str, ResidueSequence]
    shots: int
    test_pairs: list[Pair] = field(default_factory=list)
    test_labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    drug_ids: list[str] = field(default_factory=list)
    target_ids: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        overlap = set(self.positives) & set(self.negatives)
        if overlap:
            raise ContractViolation(f"{len(overlap)} pairs labeled both positive and negative")
        if not self.drug_ids:
            self.drug_ids = list(self.drugs)
        if not self.target_ids:
            self.target_ids = list(self.targets)

    @property
    def labeled(self) -> set[Pair]:
        return set(self.positives) | set(self.negatives)


@dataclass
class PseudoLabelBatch:
    candidates: list[Pair]
    scores: np.ndarray
    positives: list[Pair]
    negatives: list[Pair]
    generator: str = "A"

    def check(self, ground_truth: Iterable[Pair] = ()) -> None:
        pos, neg = set(self.positives), set(self.negatives)
        if pos & neg:
            raise PseudoLabelError("pseudo-positive and pseudo-negative sets overlap")
        gt = set(ground_truth)
        if (pos | neg) & gt:
            raise PseudoLabelError("pseudo labels collide with ground-truth pairs")


# ---------------------------------------------------------------- selection

def sample_candidates(drugs: Sequence[str], targets: Sequence[str], alpha: float,
                      rng: np.random.Generator, exclude: Iterable[Pair] = ()) -> list[Pair]:
    """Uniform sample of floor(alpha*|D|*|T|) unlabeled pairs, kept in cartesian order."""
    if not 0 < alpha <= 1:
        raise ContractViolation(f"sampling rate must lie in (0, 1], got {alpha}")
    size = math.floor(alpha * len(drugs) * len(targets))
    if size < 1:
        raise ContractViolation(f"rate {alpha} over {len(drugs)}x{len(targets)} pairs selects nothing")
    skip = set(exclude)
    pool = [(d, t) for d in drugs for t in targets if (d, t) not in skip]
    if not pool:
        raise PseudoLabelError("candidate pool is empty after excluding labeled pairs")
    idx = np.sort(rng.choice(len(pool), size=min(size, len(pool)), replace=False))
    return [pool[i] for i in idx]


def needed_negatives(gamma: int, n_pos: int, n_pseudo_pos: int, n_neg: int) -> int:
    """Pseudo-negatives required so weighted positives equal negatives (floored at 0)."""
    n = gamma * n_pos + n_pseudo_pos - n_neg
    if n < 0:
        log.warning("balance needs %d pseudo-negatives; using 0", n)
        return 0
    return n


def joint_negative_count(gamma: int, n_pos: int, n_pos_a: int, n_pos_b: int, n_neg: int) -> int:
    """Per-expert pseudo-negative count for the joint stage (rounded down, floored at 0)."""
    num = gamma * n_pos + n_pos_a + n_pos_b - n_neg
    if num < 0:
        log.warning("joint-stage balance numerator %d is negative; using 0", num)
        return 0
    if num % 2:
        log.warning("joint-stage balance numerator %d is odd; one negative short", num)
    return num // 2


def _descending(scores: np.ndarray) -> np.ndarray:
    return np.lexsort((np.arange(scores.size), -scores))


def _ascending(scores: np.ndarray) -> np.ndarray:
    return np.lexsort((np.arange(scores.size), scores))


def select_pseudo_labels(cand: Sequence[Pair], scores, beta: float, n_negatives: int,
                         generator: str = "A") -> PseudoLabelBatch:
    """Top floor(beta*|cand|) as positives, lowest ``n_negatives`` of the rest as negatives.

    Ties break by ascending candidate index in both directions.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (len(cand),):
        raise ContractViolation(f"{len(cand)} candidates but {scores.size} scores")
    if not np.isfinite(scores).all():
        raise ContractViolation("candidate scores must be finite")
    k = math.floor(beta * len(cand))
    if k + n_negatives > len(cand):
        raise PseudoLabelError(
            f"{k} pseudo-positives plus {n_negatives} pseudo-negatives exceed {len(cand)} candidates"
        )
    top = _descending(scores)[:k]
    taken = np.zeros(len(cand), dtype=bool)
    taken[top] = True
    bottom = [i for i in _ascending(scores) if not taken[i]][:n_negatives]
    return PseudoLabelBatch(
        candidates=list(cand),
        scores=scores,
        positives=[cand[i] for i in top],
        negatives=[cand[i] for i in bottom],
        generator=generator,
    )


# ---------------------------------------------------------------- losses

@dataclass
class LabeledBatch:
    pairs: list[Pair]
    labels: np.ndarray
    weights: np.ndarray

    @property
    def weighted_positives(self) -> float:
        return float(self.weights[self.labels == 1].sum())

    @property
    def negatives(self) -> int:
        return int((self.labels == 0).sum())


def assemble(true_pos: Sequence[Pair], true_neg: Sequence[Pair], pseudo_pos: Sequence[Pair] = (),
             pseudo_neg: Sequence[Pair] = (), gamma: float = 1) -> LabeledBatch:
    """Pairs in the order [X^p, X^n, pseudo-positives, pseudo-negatives]; gamma weights X^p."""
    pairs = list(true_pos) + list(true_neg) + list(pseudo_pos) + list(pseudo_neg)
    if not true_pos and not pseudo_pos:
        raise ContractViolation("training batch has no positives")
    labels = np.concatenate([np.ones(len(true_pos)), np.zeros(len(true_neg)),
                             np.ones(len(pseudo_pos)), np.zeros(len(pseudo_neg))]).astype(np.int64)
    weights = np.ones(len(pairs))
    weights[: len(true_pos)] = gamma
    return LabeledBatch(pairs, labels, weights)


def weighted_bce(p: T.Tensor, labels: np.ndarray, weights: np.ndarray) -> T.Tensor:
    """Sum over pairs of -w * [y log p + (1-y) log(1-p)], p clipped to [EPS, 1-EPS]."""
    labels = np.asarray(labels, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if p.shape != labels.shape or labels.shape != weights.shape:
        raise ContractViolation(f"shapes differ: p {p.shape}, labels {labels.shape}, weights {weights.shape}")
    pc = T.clip(p, EPS, 1.0 - EPS)
    pos = T.Tensor(weights * labels)
    neg = T.Tensor(weights * (1.0 - labels))
    return -(T.total(pos * T.log(pc)) + T.total(neg * T.log(1.0 - pc)))


def synergize_loss(outputs: T.Tensor, true_pos: Sequence[Pair], true_neg: Sequence[Pair],
                   batch: PseudoLabelBatch, gamma: int) -> T.Tensor:
    """Expert-B loss; ``outputs`` must follow the ``assemble`` pair order."""
    lb = assemble(true_pos, true_neg, batch.positives, batch.negatives, gamma)
    return weighted_bce(outputs, lb.labels, lb.weights)


# ---------------------------------------------------------------- training loop

@dataclass
class TrainingLog:
    rows: list[dict] = field(default_factory=list)

    FIELDS = ("step", "epoch", "loss", "true_pos", "true_neg", "pseudo_pos", "pseudo_neg")

    def add(self, step: str, epoch: int, loss: float, lb: LabeledBatch, n_pp: int, n_pn: int) -> None:
        if not math.isfinite(loss):
            raise ContractViolation(f"non-finite loss in {step} epoch {epoch}")
        self.rows.append({
            "step": step, "epoch": epoch, "loss": loss,
            "true_pos": int((lb.labels == 1).sum()) - n_pp, "true_neg": lb.negatives - n_pn,
            "pseudo_pos": n_pp, "pseudo_neg": n_pn,
        })

    def last_loss(self, step: str) -> float:
        return [r["loss"] for r in self.rows if r["step"] == step][-1]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.FIELDS)
            for r in self.rows:
                w.writerow([r["step"], r["epoch"], repr(float(r["loss"])), r["true_pos"],
                            r["true_neg"], r["pseudo_pos"], r["pseudo_neg"]])


@dataclass
class TrainResult:
    model: MixtureModel
    log: TrainingLog
    batches: dict[str, object]


StepHook = Callable[[str, MixtureModel], None]


def _fit(step: str, model_loss: Callable[[], T.Tensor], groups: list[tuple[list[T.Tensor], float]],
         cfg: Config, epochs: int, lb: LabeledBatch, n_pp: int, n_pn: int, tlog: TrainingLog) -> None:
    opts = [make_optimizer(cfg.train.optimizer, ps, lr) for ps, lr in groups if ps]
    for epoch in range(epochs):
        T.clear_tape()
        loss = model_loss()
        T.backward(loss)
        for o in opts:
            for p in o.params:
                if p.grad is None:
                    p.grad = np.zeros_like(p.data)
            o.step()
        tlog.add(step, epoch, loss.item(), lb, n_pp, n_pn)
    T.clear_tape()


def _usable(model: MixtureModel, pairs: Sequence[Pair], extrinsic: bool, intrinsic: bool) -> list[Pair]:
    if not pairs:
        return []
    ok = np.ones(len(pairs), dtype=bool)
    if extrinsic:
        ok &= model.extrinsic_rows(pairs)[2]
    if intrinsic:
        ok &= model.intrinsic_index(pairs)[2]
    return [p for p, k in zip(pairs, ok) if k]


def run_training(dataset: DtiDataset, table: EntityEmbeddingTable, cfg: Config, seed: int | None = None,
                 use_pseudo: bool = True, on_step: StepHook | None = None,
                 residue_features: dict[str, np.ndarray] | None = None) -> TrainResult:
    """Steps S1-S4. With ``use_pseudo=False`` every step trains on ground truth only (plain BCE)."""
    cfg.validate()
    seed = cfg.train.seed if seed is None else seed
    init_ss, cand_ss = np.random.SeedSequence(seed).spawn(2)
    model = MixtureModel(cfg, table, dataset.drugs, dataset.targets, np.random.default_rng(init_ss),
                         residue_features)
    cand_rng = np.random.default_rng(cand_ss)
    syn, tr = cfg.synergy, cfg.train
    tlog = TrainingLog()
    batches: dict[str, object] = {}
    gt = dataset.labeled
    both_drugs = [d for d in model.drug_ids if table.row(d) is not None]
    both_targets = [t for t in model.target_ids if table.row(t) is not None]

    def hook(step):
        if on_step is not None:
            on_step(step, model)

    # S1: extrinsic head on ground truth, embeddings frozen
    xp = _usable(model, dataset.positives, True, False)
    xn = _usable(model, dataset.negatives, True, False)
    lb = assemble(xp, xn)
    _fit("S1", lambda: weighted_bce(model.p_extrinsic(lb.pairs), lb.labels, lb.weights),
         [(model.extrinsic_parameters(), tr.lr)], cfg, tr.epochs_s1, lb, 0, 0, tlog)
    if model.entity.grad is not None:
        raise ContractViolation("entity embeddings received gradients while frozen")
    hook("S1")

    # S2: extrinsic expert labels candidates for the intrinsic expert
    xp = _usable(model, dataset.positives, False, True)
    xn = _usable(model, dataset.negatives, False, True)
    if use_pseudo:
        batch = _exchange(model, "extrinsic", both_drugs, both_targets, syn.alpha_a, syn.beta_a,
                          syn.gamma_a, xp, xn, gt, cand_rng)
        batches["S2"] = batch
        lb = assemble(xp, xn, batch.positives, batch.negatives, syn.gamma_a)
        n_pp, n_pn = len(batch.positives), len(batch.negatives)
    else:
        lb, n_pp, n_pn = assemble(xp, xn), 0, 0
    _fit("S2", lambda: weighted_bce(model.p_intrinsic(lb.pairs), lb.labels, lb.weights),
         [(model.intrinsic_parameters(), tr.lr)], cfg, tr.epochs_s2, lb, n_pp, n_pn, tlog)
    hook("S2")

    # S3: roles swapped; entity rows touched by the batch become trainable
    xp = _usable(model, dataset.positives, True, False)
    xn = _usable(model, dataset.negatives, True, False)
    if use_pseudo:
        batch = _exchange(model, "intrinsic", both_drugs, both_targets, syn.alpha_b, syn.beta_b,
                          syn.gamma_b, xp, xn, gt, cand_rng)
        batches["S3"] = batch
        lb3 = assemble(xp, xn, batch.positives, batch.negatives, syn.gamma_b)
        n_pp, n_pn = len(batch.positives), len(batch.negatives)
    else:
        lb3, n_pp, n_pn = assemble(xp, xn), 0, 0
    model.entity.requires_grad = True
    _fit("S3", lambda: weighted_bce(model.p_extrinsic(lb3.pairs), lb3.labels, lb3.weights),
         [(model.extrinsic_parameters(), tr.lr), ([model.entity], tr.lr_embed)],
         cfg, tr.epochs_s3, lb3, n_pp, n_pn, tlog)
    hook("S3")

    # S4: gate and both experts on the blended prediction
    xp = _usable(model, dataset.positives, True, True)
    xn = _usable(model, dataset.negatives, True, True)
    if use_pseudo:
        joint = _joint_batch(model, both_drugs, both_targets, syn, xp, xn, gt, cand_rng)
        batches["S4"] = joint
        lb4 = assemble(xp, xn, joint["positives"], joint["negatives"], syn.gamma_g)
        n_pp, n_pn = len(joint["positives"]), len(joint["negatives"])
    else:
        lb4, n_pp, n_pn = assemble(xp, xn), 0, 0
    _fit("S4", lambda: weighted_bce(model.forward(lb4.pairs)[0], lb4.labels, lb4.weights),
         [(model.gate_parameters() + model.extrinsic_parameters() + model.intrinsic_parameters(),
           tr.lr_joint),
          ([model.entity], tr.lr_embed)], cfg, tr.epochs_s4, lb4, n_pp, n_pn, tlog)
    model.entity.requires_grad = False
    model.entity.grad = None
    hook("S4")
    return TrainResult(model, tlog, batches)


def _scores(model: MixtureModel, pairs: Sequence[Pair], expert: str) -> np.ndarray:
    return model.predict(pairs, mode=expert).p


def _exchange(model, expert, drugs, targets, alpha, beta, gamma, xp, xn, gt, rng) -> PseudoLabelBatch:
    cand = sample_candidates(drugs, targets, alpha, rng, exclude=gt)
    k = math.floor(beta * len(cand))
    need = needed_negatives(gamma, len(xp), k, len(xn))
    batch = select_pseudo_labels(cand, _scores(model, cand, expert), beta, need,
                                 generator=expert)
    batch.check(gt)
    lb = assemble(xp, xn, batch.positives, batch.negatives, gamma)
    if need > 0 and lb.weighted_positives != lb.negatives:
        raise PseudoLabelError(f"label balance broken: {lb.weighted_positives} vs {lb.negatives}")
    log.info("%s expert proposes %d pseudo-positives and %d pseudo-negatives from %d candidates",
             expert, len(batch.positives), len(batch.negatives), len(cand))
    return batch


def merge_joint_positives(top_a: Sequence[Pair], scores_a, top_b: Sequence[Pair],
                          scores_b) -> tuple[list[Pair], list[str]]:
    """Trim the longer ranked list to the shorter one's length, then drop duplicates.

    A pair proposed by both experts keeps the provenance with the higher score.
    Returns the merged pairs and their provenance tags ("A"/"B").
    """
    n = min(len(top_a), len(top_b))
    best: dict[Pair, tuple[float, str]] = {}
    order: list[Pair] = []
    for tag, pairs, scores in (("A", top_a[:n], scores_a[:n]), ("B", top_b[:n], scores_b[:n])):
        for p, s in zip(pairs, scores):
            if p not in best:
                order.append(p)
                best[p] = (float(s), tag)
            elif float(s) > best[p][0]:
                best[p] = (float(s), tag)
    return order, [best[p][1] for p in order]


def _joint_batch(model, drugs, targets, syn, xp, xn, gt, rng) -> dict:
    cand_a = sample_candidates(drugs, targets, syn.alpha_a, rng, exclude=gt)
    cand_b = sample_candidates(drugs, targets, syn.alpha_b, rng, exclude=gt)
    sa = _scores(model, cand_a, "extrinsic")
    sb = _scores(model, cand_b, "intrinsic")
    ka = math.floor(syn.beta_g * len(cand_a))
    kb = math.floor(syn.beta_g * len(cand_b))
    oa, ob = _descending(sa)[:ka], _descending(sb)[:kb]
    pos, tags = merge_joint_positives([cand_a[i] for i in oa], sa[oa], [cand_b[i] for i in ob], sb[ob])
    n_a, n_b = tags.count("A"), tags.count("B")
    each = joint_negative_count(syn.gamma_g, len(xp), n_a, n_b, len(xn))
    chosen = set(pos)
    negs: list[Pair] = []
    for cand, scores, tag in ((cand_a, sa, "A"), (cand_b, sb, "B")):
        picked = []
        for i in _ascending(scores):
            if len(picked) == each:
                break
            if cand[i] not in chosen:
                picked.append(cand[i])
                chosen.add(cand[i])
        if len(picked) < each:
            raise PseudoLabelError(f"pool {tag} holds {len(picked)} usable negatives, {each} needed")
        negs += picked
    if (set(pos) | set(negs)) & gt:
        raise PseudoLabelError("joint pseudo labels collide with ground truth")
    return {"positives": pos, "provenance": tags, "negatives": negs, "per_expert_negatives": each}

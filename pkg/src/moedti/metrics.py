"""ACC / ROC-AUC / average precision for binary scores."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation

UNDEFINED = float("nan")


@dataclass
class EvalRow:
    acc: float
    auc: float
    aupr: float
    n: int
    n_pos: int

    @property
    def defined(self) -> bool:
        return not (np.isnan(self.auc) or np.isnan(self.aupr))


def _check(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise ContractViolation(f"{s.size} scores for {y.size} labels")
    if s.size < 2:
        raise ContractViolation("metrics need at least two scored pairs")
    if not np.isin(y, (0, 1)).all():
        raise ContractViolation("labels must be 0 or 1")
    if not np.isfinite(s).all():
        raise ContractViolation("scores must be finite")
    return s, y.astype(np.int64)


def accuracy(scores, labels, threshold: float = 0.5) -> float:
    s, y = _check(scores, labels)
    return float(np.mean((s >= threshold).astype(np.int64) == y))


def roc_auc(scores, labels) -> float:
    """Mann-Whitney statistic with tied scores counted one half; NaN for a single class."""
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return UNDEFINED
    order = np.argsort(s, kind="mergesort")
    ss = s[order]
    ranks = np.empty(s.size)
    # average 1-based rank within each tie group
    starts = np.flatnonzero(np.r_[True, ss[1:] != ss[:-1]])
    ends = np.r_[starts[1:], ss.size]
    avg = (starts + ends + 1) / 2.0
    ranks[order] = np.repeat(avg, ends - starts)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def average_precision(scores, labels) -> float:
    """Sum over distinct thresholds of (recall step) x precision; NaN without positives."""
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        return UNDEFINED
    order = np.argsort(-s, kind="mergesort")
    ss, yy = s[order], y[order]
    tp = np.cumsum(yy)
    last = np.r_[np.flatnonzero(ss[1:] != ss[:-1]), ss.size - 1]  # end of each tie group
    tp_at = tp[last]
    precision = tp_at / (last + 1.0)
    recall_step = np.diff(np.r_[0, tp_at]) / n_pos
    return float(np.sum(recall_step * precision))


def compute_metrics(scores, labels, threshold: float = 0.5) -> EvalRow:
    s, y = _check(scores, labels)
    return EvalRow(accuracy(s, y, threshold), roc_auc(s, y), average_precision(s, y),
                   int(y.size), int(y.sum()))

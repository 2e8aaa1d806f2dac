import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from moedti.errors import ContractViolation
from moedti.metrics import average_precision, compute_metrics, roc_auc


def auc_oracle(s, y):
    pos = [a for a, l in zip(s, y) if l == 1]
    neg = [a for a, l in zip(s, y) if l == 0]
    total = 0.0
    for a in pos:
        for b in neg:
            total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (len(pos) * len(neg))


def ap_oracle(s, y):
    # walk every distinct threshold from the top; step integral of precision over recall
    n_pos = sum(y)
    prev_recall, ap = 0.0, 0.0
    for thr in sorted(set(s), reverse=True):
        chosen = [l for a, l in zip(s, y) if a >= thr]
        tp = sum(chosen)
        recall = tp / n_pos
        ap += (recall - prev_recall) * (tp / len(chosen))
        prev_recall = recall
    return ap


def random_instance(rng):
    n = int(rng.integers(2, 201))
    y = rng.integers(0, 2, n)
    y[0], y[1] = 0, 1
    if rng.random() < 0.5:
        s = rng.integers(0, 5, n) / 4.0  # heavy ties
    else:
        s = rng.random(n)
    return s, y


def test_perfect_separation():
    r = compute_metrics([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
    assert (r.acc, r.auc, r.aupr) == (1.0, 1.0, 1.0)


def test_all_tied_scores_give_half_auc():
    assert roc_auc([0.3] * 6, [1, 0, 1, 0, 1, 0]) == 0.5


def test_single_class_is_undefined_but_acc_computed():
    r = compute_metrics([0.9, 0.1, 0.7], [1, 1, 1])
    assert math.isnan(r.auc) and math.isnan(r.aupr)
    assert r.acc == pytest.approx(2 / 3)
    assert not r.defined


def test_bad_inputs():
    with pytest.raises(ContractViolation):
        compute_metrics([0.1], [1])
    with pytest.raises(ContractViolation):
        compute_metrics([0.1, 0.2], [1, 2])


def test_against_brute_force_oracles():
    rng = np.random.default_rng(0)
    for _ in range(200):
        s, y = random_instance(rng)
        assert abs(roc_auc(s, y) - auc_oracle(s, y)) <= 1e-12
        assert abs(average_precision(s, y) - ap_oracle(s, y)) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 100), st.integers(0, 1)), min_size=2, max_size=40))
def test_metric_ranges_and_monotone_invariance(rows):
    s = np.array([r[0] for r in rows]) / 100.0
    y = np.array([r[1] for r in rows])
    if y.min() == y.max():
        return
    auc, ap = roc_auc(s, y), average_precision(s, y)
    assert 0 <= auc <= 1 and 0 < ap <= 1
    # strictly increasing transforms keep rank metrics unchanged
    assert roc_auc((s + 1) ** 3, y) == pytest.approx(auc, abs=1e-12)
    assert average_precision(2 * s + 1, y) == pytest.approx(ap, abs=1e-12)

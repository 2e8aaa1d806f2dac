"""Central finite-difference gradient checking."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward, clear_tape, no_grad, track_kinks


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_param: str
    n_entries: int

    def ok(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error <= tol


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def kink_margin(fn: Callable[[], Tensor]) -> float:
    """Smallest distance of any ReLU input / max competitor to its kink for one forward pass."""
    with no_grad(), track_kinks() as box:
        fn()
    return box[0]


def check_gradients(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-4,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckResult:
    """Compare tape gradients of the scalar ``fn()`` with central differences.

    ``max_entries`` caps the number of coordinates probed per parameter
    (sampled with ``rng``); None probes every coordinate.
    """
    clear_tape()
    for p in params:
        p.grad = None
    loss = fn()
    backward(loss)
    worst, worst_name, count = 0.0, "", 0
    for k, p in enumerate(params):
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            rng = rng or np.random.default_rng(0)
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        numeric = np.empty(idx.size)
        with no_grad():
            for j, i in enumerate(idx):
                orig = flat[i]
                flat[i] = orig + eps
                up = fn().item()
                flat[i] = orig - eps
                down = fn().item()
                flat[i] = orig
                numeric[j] = (up - down) / (2 * eps)
        err = relative_error(analytic.reshape(-1)[idx], numeric)
        count += idx.size
        if err.size and err.max() > worst:
            worst = float(err.max())
            worst_name = p.name or f"param{k}"
        p.grad = None
    return GradCheckResult(worst, worst_name, count)

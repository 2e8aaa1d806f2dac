"""Dense float64 tensors with a reverse-mode tape.

Every op that touches a tensor with ``requires_grad`` appends a node to the
calling thread's tape. ``backward`` walks the tape in reverse, fills ``.grad``
on every reachable tensor that requires gradients, then clears the tape.
"""
from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractViolation, DimensionError, NumericOverflowError


class _TapeState(threading.local):
    def __init__(self) -> None:
        self.nodes: list[_Node] = []
        self.enabled = True
        self.kink_margin: float | None = None


_state = _TapeState()


class _Node:
    __slots__ = ("out", "parents", "backward")

    def __init__(self, out: "Tensor", parents: tuple["Tensor", ...], backward: Callable) -> None:
        self.out = out
        self.parents = parents
        self.backward = backward


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_node", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None) -> None:
        arr = np.array(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self._node: _Node | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractViolation(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (inference)."""
    prev = _state.enabled
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


@contextlib.contextmanager
def track_kinks():
    """Record how close any ReLU input or max competitor came to a kink.

    Yields a one-element list that holds the smallest margin seen once the
    block exits. Gradient checks use it to reject non-differentiable points.
    """
    prev = _state.kink_margin
    _state.kink_margin = float("inf")
    box = [float("inf")]
    try:
        yield box
    finally:
        box[0] = _state.kink_margin
        _state.kink_margin = prev


def _note_kink(margin: float) -> None:
    if _state.kink_margin is not None and margin < _state.kink_margin:
        _state.kink_margin = margin


def tape_length() -> int:
    return len(_state.nodes)


def clear_tape() -> None:
    _state.nodes.clear()


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericOverflowError(f"{op} produced non-finite values")


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward: Callable, op: str) -> Tensor:
    _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out._node = None
    needs = _state.enabled and any(p.requires_grad for p in parents)
    out.requires_grad = needs
    if needs:
        node = _Node(out, parents, backward)
        out._node = node
        _state.nodes.append(node)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(op, a.shape, b.shape) from None


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    if (b.data == 0).any():
        raise NumericOverflowError("div: division by zero")
    out = a.data / b.data

    def bw(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    return _make(out, (a, b), bw, "div")


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def relu(a: Tensor) -> Tensor:
    if _state.kink_margin is not None and a.size:
        _note_kink(float(np.abs(a.data).min()))
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def log(a: Tensor) -> Tensor:
    if (a.data <= 0).any():
        raise NumericOverflowError("log of a non-positive value")
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def cos(a: Tensor) -> Tensor:
    return _make(np.cos(a.data), (a,), lambda g: (-g * np.sin(a.data),), "cos")


def sin(a: Tensor) -> Tensor:
    return _make(np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),), "sin")


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,), "clip")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (a,), bw, "softmax")


# ---------------------------------------------------------------- reductions / shape

def total(a: Tensor, axis: int | None = None) -> Tensor:
    """Sum over ``axis`` (all axes when None)."""
    out = a.data.sum(axis=axis)

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _make(np.asarray(out, dtype=np.float64), (a,), bw, "sum")


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    n = a.size if axis is None else a.shape[axis]
    if n == 0:
        raise ContractViolation("mean of an empty tensor")
    return mul(total(a, axis), 1.0 / n)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError("reshape", a.shape, tuple(shape)) from None
    return _make(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def _is_basic_index(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (slice, int, type(Ellipsis), type(None))) for p in parts)


def getitem(a: Tensor, index) -> Tensor:
    out = np.array(a.data[index], dtype=np.float64)
    basic = _is_basic_index(index)

    def bw(g):
        full = np.zeros_like(a.data)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _make(out, (a,), bw, "getitem")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, ref)) if i != ax
        ):
            raise DimensionError("concat", ref, t.shape)
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _make(np.concatenate([t.data for t in tensors], axis=ax), tuple(tensors), bw, "concat")


# ---------------------------------------------------------------- linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError("matmul", a.shape, b.shape)

    def bw(g):
        return g @ b.data.T, a.data.T @ g

    return _make(a.data @ b.data, (a, b), bw, "matmul")


def l2_norm(a: Tensor, axis: int = -1) -> Tensor:
    """Euclidean norm along ``axis``; the gradient at a zero vector is taken as zero."""
    out = np.sqrt((a.data ** 2).sum(axis=axis))

    def bw(g):
        denom = np.expand_dims(out, axis)
        safe = np.where(denom > 0, denom, 1.0)
        return (np.where(denom > 0, a.data / safe, 0.0) * np.expand_dims(g, axis),)

    return _make(out, (a,), bw, "l2_norm")


# ---------------------------------------------------------------- gather / scatter

def embedding_lookup(table: Tensor, indices) -> Tensor:
    idx = np.asarray(indices, dtype=np.int64)
    if table.ndim != 2:
        raise DimensionError("embedding_lookup", table.shape, idx.shape)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ContractViolation(
            f"embedding index out of range for table with {table.shape[0]} rows"
        )

    def bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        return (full,)

    return _make(table.data[idx], (table,), bw, "embedding_lookup")


def _sorted_segment_sum(values: np.ndarray, ids: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n,) + values.shape[1:], dtype=np.float64)
    if ids.size == 0:
        return out
    order = np.argsort(ids, kind="stable")
    sid = ids[order]
    starts = np.flatnonzero(np.r_[True, sid[1:] != sid[:-1]])
    out[sid[starts]] = np.add.reduceat(values[order], starts, axis=0)
    return out


def segment_sum(values: Tensor, segments, num_segments: int) -> Tensor:
    """Row-wise sum of ``values`` grouped by integer segment ids."""
    ids = np.asarray(segments, dtype=np.int64)
    if ids.shape[0] != values.shape[0]:
        raise DimensionError("segment_sum", values.shape, ids.shape)
    if ids.size and (ids.min() < 0 or ids.max() >= num_segments):
        raise ContractViolation("segment id out of range")
    out = _sorted_segment_sum(values.data, ids, num_segments)
    return _make(out, (values,), lambda g: (g[ids],), "segment_sum")


def range_max(a: Tensor, starts, ends) -> Tensor:
    """Max over row ranges ``[starts[i], ends[i])`` of a 2-D tensor.

    Ranges must be non-empty; they may overlap. The gradient goes to the
    first maximising row of each (range, column) cell.
    """
    starts = np.asarray(starts, dtype=np.int64)
    ends = np.asarray(ends, dtype=np.int64)
    if a.ndim != 2:
        raise DimensionError("range_max", a.shape, starts.shape)
    if starts.size == 0 or (ends <= starts).any() or starts.min() < 0 or ends.max() > a.shape[0]:
        raise ContractViolation("range_max needs non-empty ranges inside the signal")
    padded = np.vstack([a.data, np.zeros((1, a.shape[1]))])
    bounds = np.empty(2 * starts.size, dtype=np.int64)
    bounds[0::2] = starts
    bounds[1::2] = ends
    out = np.maximum.reduceat(padded, bounds, axis=0)[0::2]
    if _state.kink_margin is not None:
        for s, e in zip(starts, ends):
            if e - s > 1:
                top2 = np.sort(a.data[s:e], axis=0)[-2:]
                gap = top2[1] - top2[0]
                # exact ties come from dead ReLUs or symmetric atoms and stay tied
                # under parameter perturbation
                live = gap != 0
                if live.any():
                    _note_kink(float(gap[live].min()))
    cols = np.arange(a.shape[1])

    def bw(g):
        full = np.zeros_like(a.data)
        for i, (s, e) in enumerate(zip(starts, ends)):
            rows = s + np.argmax(a.data[s:e], axis=0)
            full[rows, cols] += g[i]
        return (full,)

    return _make(out, (a,), bw, "range_max")


def max_over_rows(a: Tensor) -> Tensor:
    """Column-wise max over all rows; returns shape (1, C)."""
    return range_max(a, [0], [a.shape[0]])


def segment_max(values: Tensor, segments) -> Tensor:
    """Column-wise max per segment; rows of one segment must be contiguous."""
    ids = np.asarray(segments, dtype=np.int64)
    if ids.shape[0] != values.shape[0]:
        raise DimensionError("segment_max", values.shape, ids.shape)
    if (np.diff(ids) < 0).any():
        raise ContractViolation("segment_max needs rows grouped by ascending segment id")
    change = np.flatnonzero(np.r_[True, ids[1:] != ids[:-1]])
    ends = np.r_[change[1:], ids.size]
    return range_max(values, change, ends)


def adaptive_pool_bounds(length: int, out_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Segment ``i`` covers ``[floor(i*M/P), floor((i+1)*M/P))``.

    When M < P a floor segment would be empty; it is widened to one row.
    """
    i = np.arange(out_len)
    starts = (i * length) // out_len
    ends = ((i + 1) * length) // out_len
    ends = np.maximum(ends, starts + 1)
    starts = np.minimum(starts, length - 1)
    return starts, ends


def adaptive_max_pool(signal: Tensor, out_len: int) -> Tensor:
    if signal.ndim != 2 or signal.shape[0] < 1:
        raise DimensionError("adaptive_max_pool", signal.shape, (out_len,))
    starts, ends = adaptive_pool_bounds(signal.shape[0], out_len)
    return range_max(signal, starts, ends)


# ---------------------------------------------------------------- convolution

def conv1d(signal: Tensor, kernel: Tensor, stride: int = 1) -> Tensor:
    """Cross-correlation of a (M, C_in) signal with a (K, C_in, C_out) kernel.

    Zero "same" padding: output length is ceil(M / stride).
    """
    if signal.ndim != 2 or kernel.ndim != 3 or signal.shape[1] != kernel.shape[1]:
        raise DimensionError("conv1d", signal.shape, kernel.shape)
    if stride < 1:
        raise ContractViolation("conv1d stride must be >= 1")
    m, cin = signal.shape
    k, _, cout = kernel.shape
    left = (k - 1) // 2
    right = k - 1 - left
    xpad = np.pad(signal.data, ((left, right), (0, 0)))
    windows = np.lib.stride_tricks.sliding_window_view(xpad, k, axis=0)[::stride]
    # windows: (M_out, C_in, K) -> (M_out, K, C_in)
    cols = np.ascontiguousarray(windows.transpose(0, 2, 1)).reshape(windows.shape[0], k * cin)
    wmat = kernel.data.reshape(k * cin, cout)
    out = cols @ wmat

    def bw(g):
        gw = (cols.T @ g).reshape(kernel.shape)
        gcols = (g @ wmat.T).reshape(-1, k, cin)
        gpad = np.zeros_like(xpad)
        n_out = gcols.shape[0]
        for j in range(k):
            gpad[j : j + stride * (n_out - 1) + 1 : stride] += gcols[:, j, :]
        return gpad[left : left + m], gw

    return _make(out, (signal, kernel), bw, "conv1d")


# ---------------------------------------------------------------- backward

def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every tensor reachable from ``loss``, then clear the tape."""
    if loss.size != 1:
        raise ContractViolation(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractViolation("loss is not on the tape (no input requires gradients)")
    nodes = _state.nodes
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    touched: list[Tensor] = [loss]
    for node in reversed(nodes):
        g = grads.get(id(node.out))
        if g is None:
            continue
        parent_grads = node.backward(g)
        for p, pg in zip(node.parents, parent_grads):
            if not p.requires_grad or pg is None:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
                touched.append(p)
    for t in touched:
        g = grads[id(t)]
        t.grad = g if t.grad is None else t.grad + g
    for node in nodes:
        node.out._node = None
    nodes.clear()


def parameter(shape: Iterable[int], rng: np.random.Generator, scale: float | None = None,
              name: str | None = None, init: str = "glorot") -> Tensor:
    """Trainable tensor with uniform Glorot init (or zeros)."""
    shape = tuple(shape)
    if init == "zeros":
        return Tensor(np.zeros(shape), requires_grad=True, name=name)
    if scale is None:
        fan_in = shape[0] if len(shape) < 3 else shape[0] * shape[1]
        fan_out = shape[-1]
        scale = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-scale, scale, size=shape), requires_grad=True, name=name)

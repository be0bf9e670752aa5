"""Define-by-run reverse-mode autodiff over dense fp64 arrays.

Every op takes and returns :class:`Tensor` objects. When a :class:`Tape` is
active on the current thread and at least one input requires gradients, the
op appends a node holding a backward closure; otherwise it only computes the
value. Calling :func:`backward` walks the tape in exact reverse creation
order.

    with Tape():
        loss = nll(softmax_rows(matmul(x, w)), label)
        backward(loss)
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels

__all__ = [
    "Tensor", "Tape", "GradCheckReport", "const", "backward",
    "matmul", "concat", "elementwise", "tanh", "sigmoid", "exp", "mul", "add",
    "add_row", "reduce_max", "softmax_rows", "gather_rows", "apply_dropout",
    "nll", "reshape", "slice_rows", "unfold_windows", "normalize", "sum_all",
    "scale", "lstm_sequence", "finite_difference_check",
]

LOG_FLOOR = 1e-12

_local = threading.local()


class Tensor:
    """An fp64 array with a lazily allocated gradient slot."""

    __slots__ = ("data", "_grad", "requires_grad", "node_id", "name", "_tape")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self._grad = None
        self.requires_grad = requires_grad
        self.node_id: Optional[int] = None
        self.name = name
        self._tape: Optional[Tape] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.zeros_like(self.data)
        return self._grad

    @grad.setter
    def grad(self, value) -> None:
        self._grad = None if value is None else np.asarray(value, dtype=np.float64)

    def zero_grad(self) -> None:
        self._grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self._grad is None:
            self._grad = np.array(g, dtype=np.float64).reshape(self.data.shape)
        else:
            self._grad += g.reshape(self.data.shape)

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"


@dataclass
class Node:
    kind: str
    inputs: tuple
    output: Tensor
    backward_fn: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tape:
    """Ordered record of ops for one forward pass.

    Used as a context manager; the innermost active tape on the current thread
    receives new nodes. Tapes are not shared across threads.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        stack = getattr(_local, "stack", None)
        if stack is None:
            stack = _local.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _local.stack.pop()

    def __len__(self) -> int:
        return len(self.nodes)


def current_tape() -> Optional[Tape]:
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


def const(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def _record(kind: str, inputs: tuple, out_data: np.ndarray, backward_fn) -> Tensor:
    out = Tensor(out_data)
    tape = current_tape()
    if tape is None or not any(t.requires_grad for t in inputs):
        return out
    out.requires_grad = True
    out.node_id = len(tape.nodes)
    out._tape = tape
    tape.nodes.append(Node(kind, inputs, out, backward_fn))
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = loss._tape
    if tape is None or loss.node_id is None:
        raise ValueError("loss was not produced on an active tape")
    grads: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
    for node in reversed(tape.nodes[: loss.node_id + 1]):
        g_out = grads.pop(node.output.node_id, None)
        if g_out is None:
            continue
        in_grads = node.backward_fn(g_out)
        for inp, g in zip(node.inputs, in_grads):
            if g is None or not inp.requires_grad:
                continue
            if inp._tape is tape and inp.node_id is not None:
                prev = grads.get(inp.node_id)
                grads[inp.node_id] = g if prev is None else prev + g
            else:
                inp._accumulate(g)


# --------------------------------------------------------------------------
# primitive ops
# --------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    A, B = a.data, b.data

    def bw(g):
        return (g @ B.T if a.requires_grad else None,
                A.T @ g if b.requires_grad else None)

    return _record("matmul", (a, b), A @ B, bw)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not parts:
        raise ValueError("concat of an empty list")
    ndim = parts[0].data.ndim
    for p in parts:
        if p.data.ndim != ndim:
            raise ValueError(f"concat rank mismatch: {[q.shape for q in parts]}")
        side = [d for i, d in enumerate(p.shape) if i != axis % ndim]
        ref = [d for i, d in enumerate(parts[0].shape) if i != axis % ndim]
        if side != ref:
            raise ValueError(f"concat side dimensions disagree: {[q.shape for q in parts]}")
    out = np.concatenate([p.data for p in parts], axis=axis)
    bounds = np.cumsum([0] + [p.shape[axis] for p in parts])

    def bw(g):
        return [np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
                for i in range(len(parts))]

    return _record("concat", tuple(parts), out, bw)


def elementwise(kind: str, a: Tensor, b: Optional[Tensor] = None) -> Tensor:
    if kind in ("mul", "add"):
        if b is None:
            raise ValueError(f"{kind} needs two operands")
        if a.shape != b.shape:
            raise ValueError(f"{kind} shape mismatch: {a.shape} vs {b.shape}")
        A, B = a.data, b.data
        if kind == "mul":
            return _record("mul", (a, b), A * B, lambda g: (g * B, g * A))
        return _record("add", (a, b), A + B, lambda g: (g, g))
    x = a.data
    if kind == "tanh":
        y = np.tanh(x)
        return _record("tanh", (a,), y, lambda g: (g * (1.0 - y * y),))
    if kind == "sigmoid":
        y = kernels.sigmoid(x)
        return _record("sigmoid", (a,), y, lambda g: (g * y * (1.0 - y),))
    if kind == "exp":
        y = np.exp(x)
        return _record("exp", (a,), y, lambda g: (g * y,))
    raise ValueError(f"unknown elementwise kind {kind!r}")


def tanh(a: Tensor) -> Tensor:
    return elementwise("tanh", a)


def sigmoid(a: Tensor) -> Tensor:
    return elementwise("sigmoid", a)


def exp(a: Tensor) -> Tensor:
    return elementwise("exp", a)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return elementwise("mul", a, b)


def add(a: Tensor, b: Tensor) -> Tensor:
    return elementwise("add", a, b)


def add_row(a: Tensor, bias: Tensor) -> Tensor:
    """``a[i, :] + bias`` for every row i."""
    if a.data.ndim != 2 or bias.shape != (a.shape[1],):
        raise ValueError(f"add_row shape mismatch: {a.shape} + {bias.shape}")
    return _record("add_row", (a, bias), a.data + bias.data,
                   lambda g: (g, g.sum(axis=0)))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _record("scale", (a,), a.data * c, lambda g: (g * c,))


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _record("sum", (a,), np.array(a.data.sum()),
                   lambda g: (np.full(shape, float(g)),))


def reduce_max(t: Tensor, axis: int = 0) -> tuple[Tensor, np.ndarray]:
    """Column maxima of an n x f tensor; ties go to the lowest row index."""
    if axis != 0:
        raise ValueError("reduce_max supports axis 0 only")
    if t.data.ndim != 2:
        raise ValueError(f"reduce_max expects a 2-d tensor, got {t.shape}")
    n, f = t.shape
    if n == 0:
        raise ValueError("reduce_max over an empty axis")
    idx = np.argmax(t.data, axis=0)  # first occurrence on ties
    cols = np.arange(f)
    out = t.data[idx, cols]

    def bw(g):
        gin = np.zeros((n, f))
        gin[idx, cols] = g
        return (gin,)

    return _record("reduce_max", (t,), out, bw), idx


def softmax_rows(t: Tensor) -> Tensor:
    x = t.data
    if x.ndim != 2:
        raise ValueError(f"softmax_rows expects a 2-d tensor, got {t.shape}")
    z = np.exp(x - x.max(axis=1, keepdims=True))
    y = z / z.sum(axis=1, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return _record("softmax_rows", (t,), y, bw)


def gather_rows(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64).reshape(-1)
    V = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= V):
        raise IndexError(f"gather_rows id out of range for table with {V} rows")
    out = table.data[ids]

    def bw(g):
        gin = np.zeros_like(table.data)
        np.add.at(gin, ids, g)
        return (gin,)

    return _record("gather_rows", (table,), out, bw)


def apply_dropout(t: Tensor, rate: float, rng: Optional[np.random.Generator],
                  training: bool) -> Tensor:
    """Inverted dropout; the identity when not training or ``rate == 0``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return t
    keep = (rng.random(t.shape) >= rate) / (1.0 - rate)
    return _record("dropout", (t,), t.data * keep, lambda g: (g * keep,))


def nll(probs: Tensor, label: int) -> Tensor:
    p = probs.data.reshape(-1)
    if not 0 <= label < p.size:
        raise IndexError(f"label {label} out of range for {p.size} classes")
    pl = max(p[label], LOG_FLOOR)
    shape = probs.shape

    def bw(g):
        gin = np.zeros(p.size)
        if p[label] > LOG_FLOOR:
            gin[label] = -float(g) / pl
        return (gin.reshape(shape),)

    return _record("nll", (probs,), np.array(-np.log(pl)), bw)


def reshape(t: Tensor, shape) -> Tensor:
    old = t.shape
    return _record("reshape", (t,), t.data.reshape(shape), lambda g: (g.reshape(old),))


def slice_rows(t: Tensor, start: int, stop: int) -> Tensor:
    shape = t.shape

    def bw(g):
        gin = np.zeros(shape)
        gin[start:stop] = g
        return (gin,)

    return _record("slice_rows", (t,), t.data[start:stop], bw)


def unfold_windows(t: Tensor, k: int) -> Tensor:
    """Rows ``t[i] || ... || t[i+k-1]`` for i in 0..n-1, zero-padded past the end."""
    n, d = t.shape
    padded = np.zeros((n + k - 1, d))
    padded[:n] = t.data
    out = np.concatenate([padded[j:j + n] for j in range(k)], axis=1)

    def bw(g):
        gp = np.zeros((n + k - 1, d))
        for j in range(k):
            gp[j:j + n] += g[:, j * d:(j + 1) * d]
        return (gp[:n],)

    return _record("unfold", (t,), out, bw)


def normalize(t: Tensor) -> Tensor:
    """``x / sum(x)`` for a non-negative vector with a positive sum."""
    x = t.data
    s = x.sum()
    y = x / s

    def bw(g):
        return ((g - (g * y).sum()) / s,)

    return _record("normalize", (t,), y, bw)


def lstm_sequence(x: Tensor, w_in: Tensor, w_rec: Tensor, bias: Tensor,
                  reverse: bool = False) -> Tensor:
    """One LSTM direction over an n x d input with zero initial state.

    Gate blocks in ``w_in``/``w_rec``/``bias`` are ordered input, forget,
    candidate, output. The recurrence runs in :mod:`mfare.kernels`.
    """
    X = x.data
    xw = X @ w_in.data + bias.data
    h, c, gates = kernels.lstm_forward(xw, w_rec.data, reverse)
    n, hdim = h.shape

    def bw(g):
        dz = kernels.lstm_backward(np.ascontiguousarray(g), gates, c, w_rec.data, reverse)
        h_prev = np.zeros_like(h)
        if reverse:
            h_prev[:-1] = h[1:]
        else:
            h_prev[1:] = h[:-1]
        return (dz @ w_in.data.T, X.T @ dz, h_prev.T @ dz, dz.sum(axis=0))

    return _record("lstm", (x, w_in, w_rec, bias), h, bw)


# --------------------------------------------------------------------------
# gradient verification
# --------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    errors: dict = field(default_factory=dict)      # name -> max relative error
    checked: dict = field(default_factory=dict)     # name -> coordinates compared

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def worst(self) -> tuple[str, float]:
        name = max(self.errors, key=self.errors.get)
        return name, self.errors[name]

    def passed(self, tol: float = 1e-4) -> bool:
        return all(e < tol for e in self.errors.values())


def _relative_error(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def _scalar(value) -> float:
    v = value.item() if isinstance(value, Tensor) else float(value)
    if not np.isfinite(v):
        raise ValueError(f"objective returned a non-finite value: {v}")
    return v


def finite_difference_check(f: Callable[[dict], Tensor], params: dict,
                            eps: float = 1e-5, coords_per_param: int = 6,
                            seed: int = 0, min_magnitude: float = 1e-6) -> GradCheckReport:
    """Compare tape gradients of ``f(params)`` against central differences.

    Coordinates are drawn per parameter from two pools: entries whose analytic
    gradient is at least ``min_magnitude`` (below that, fp64 round-off in the
    difference quotient dominates) and entries whose analytic gradient is
    exactly zero. Relative error uses ``max(|a|, |b|, 1e-8)`` as denominator.
    """
    rng = np.random.default_rng(seed)
    for p in params.values():
        p.zero_grad()
    with Tape():
        loss = f(params)
        _scalar(loss)
        backward(loss)
    report = GradCheckReport()
    for name, p in params.items():
        analytic = p.grad.reshape(-1).copy()
        flat = p.data.reshape(-1)
        strong = np.flatnonzero(np.abs(analytic) >= min_magnitude)
        zeros = np.flatnonzero(analytic == 0.0)
        n_zero = min(zeros.size, max(1, coords_per_param // 3))
        n_strong = min(strong.size, coords_per_param - n_zero)
        picks = []
        if n_strong:
            picks += list(rng.choice(strong, n_strong, replace=False))
        if n_zero:
            picks += list(rng.choice(zeros, n_zero, replace=False))
        worst = 0.0
        for i in picks:
            orig = flat[i]
            flat[i] = orig + eps
            up = _scalar(f(params))
            flat[i] = orig - eps
            down = _scalar(f(params))
            flat[i] = orig
            numeric = (up - down) / (2 * eps)
            worst = max(worst, _relative_error(analytic[i], numeric))
        report.errors[name] = worst
        report.checked[name] = len(picks)
        p.zero_grad()
    return report

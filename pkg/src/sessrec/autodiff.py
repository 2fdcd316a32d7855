"""Dense float64 tensors with tape-based reverse-mode differentiation.

A ``Tensor`` wraps a numpy array. Operations executed while a ``Tape`` is
active append their result node (with a backward closure) to the tape in
creation order; ``Tape.backward`` walks the nodes once, in reverse, and
accumulates gradients into every ``requires_grad`` input. Leaf gradients
persist across tapes until explicitly cleared, so mini-batch training works
the usual way. Every op checks its output for NaN/inf and never mutates its
inputs.
"""

from __future__ import annotations

import contextlib

import numpy as np
import scipy.sparse as sp

from .errors import NonFiniteError, ShapeMismatchError

_TAPE_STACK: list["Tape"] = []
_GRAD_ENABLED = True


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._backward_fn = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeMismatchError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Ordered record of op results; backward visits each node once, reversed."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def backward(self, output: Tensor, seed=None):
        """Backpropagate from ``output`` through every recorded node.

        ``output`` must be scalar unless an explicit ``seed`` gradient of the
        same shape is given. Intermediate gradients are recomputed from
        scratch; leaf gradients accumulate on top of whatever is present.
        """
        if seed is None:
            if output.data.size != 1:
                raise ShapeMismatchError(
                    f"backward needs a scalar output, got shape {output.shape}"
                )
            seed = np.ones_like(output.data)
        else:
            seed = np.asarray(seed, dtype=np.float64)
            if seed.shape != output.data.shape:
                raise ShapeMismatchError(
                    f"seed shape {seed.shape} != output shape {output.data.shape}"
                )
        for node in self.nodes:
            node.grad = None
        output.grad = seed
        for node in reversed(self.nodes):
            if node.grad is None or node._backward_fn is None:
                continue
            node._backward_fn(node.grad)


@contextlib.contextmanager
def no_grad():
    """Disable tape recording (pure inference) within the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_finite(arr: np.ndarray, op: str):
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{op} produced non-finite values")


def _result(data: np.ndarray, op: str, parents, backward_fn) -> Tensor:
    _check_finite(data, op)
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._backward_fn = backward_fn
        if _TAPE_STACK:
            _TAPE_STACK[-1].nodes.append(out)
    return out


def _accum(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


# ---------------------------------------------------------------------------
# core ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _result(out_data, "matmul", (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeMismatchError(f"transpose: expected 2-d, got {a.shape}")
    out_data = a.data.T.copy()

    def backward(g):
        _accum(a, g.T)

    return _result(out_data, "transpose", (a,), backward)


def add(a, b) -> Tensor:
    """Elementwise sum. Supports equal shapes, a row vector (1, n) or (n,)
    broadcast against an (m, n) operand, and python scalars."""
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        raise TypeError("add needs at least one Tensor operand")
    if not isinstance(a, Tensor) or not isinstance(b, Tensor):
        t, c = (a, b) if isinstance(a, Tensor) else (b, a)
        c = float(c)
        out_data = t.data + c

        def backward(g):
            _accum(t, g)

        return _result(out_data, "add", (t,), backward)

    if a.shape == b.shape:
        out_data = a.data + b.data

        def backward(g):
            _accum(a, g)
            _accum(b, g)

        return _result(out_data, "add", (a, b), backward)

    # row broadcast: put the smaller operand second
    big, small = (a, b) if a.data.ndim >= b.data.ndim else (b, a)
    if (
        big.data.ndim == 2
        and small.data.ndim in (1, 2)
        and small.data.shape[-1] == big.shape[1]
        and (small.data.ndim == 1 or small.shape[0] == 1)
    ):
        out_data = big.data + small.data

        def backward(g):
            _accum(big, g)
            gs = g.sum(axis=0)
            _accum(small, gs if small.data.ndim == 1 else gs[None, :])

        return _result(out_data, "add", (big, small), backward)
    raise ShapeMismatchError(f"add: {a.shape} + {b.shape}")


def neg(a: Tensor) -> Tensor:
    def backward(g):
        _accum(a, -g)

    return _result(-a.data, "neg", (a,), backward)


def sub(a, b) -> Tensor:
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        return add(a, -float(b))
    if not isinstance(a, Tensor) and isinstance(b, Tensor):
        return add(neg(b), float(a))
    if a.shape != b.shape:
        raise ShapeMismatchError(f"sub: {a.shape} - {b.shape}")
    out_data = a.data - b.data

    def backward(g):
        _accum(a, g)
        _accum(b, -g)

    return _result(out_data, "sub", (a, b), backward)


def mul(a, b) -> Tensor:
    """Elementwise product. Supports equal shapes, python scalars, and a
    (1, 1) gate tensor broadcast against any 2-d operand."""
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        c = float(b)
        out_data = a.data * c

        def backward(g):
            _accum(a, g * c)

        return _result(out_data, "mul", (a,), backward)
    if not isinstance(a, Tensor) and isinstance(b, Tensor):
        return mul(b, a)

    if a.shape == b.shape:
        out_data = a.data * b.data

        def backward(g):
            _accum(a, g * b.data)
            _accum(b, g * a.data)

        return _result(out_data, "mul", (a, b), backward)

    if b.data.shape == (1, 1) or a.data.shape == (1, 1):
        big, gate = (a, b) if b.data.shape == (1, 1) else (b, a)
        out_data = big.data * gate.data

        def backward(g):
            _accum(big, g * gate.data.reshape(()))
            _accum(gate, np.sum(g * big.data).reshape(1, 1))

        return _result(out_data, "mul", (big, gate), backward)
    raise ShapeMismatchError(f"mul: {a.shape} * {b.shape}")


def concat(tensors, axis: int = -1) -> Tensor:
    """Concatenate 2-d tensors along the last axis (default) or axis 0."""
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeMismatchError("concat of no tensors")
    if axis not in (-1, 0, 1):
        raise ShapeMismatchError(f"concat: unsupported axis {axis}")
    ax = 1 if axis in (-1, 1) else 0
    shapes = [t.shape for t in tensors]
    if any(t.data.ndim != 2 for t in tensors) or len(
        {s[1 - ax] for s in shapes}
    ) != 1:
        raise ShapeMismatchError(f"concat axis={axis}: shapes {shapes}")
    out_data = np.concatenate([t.data for t in tensors], axis=ax)
    sizes = [s[ax] for s in shapes]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            piece = g[:, lo:hi] if ax == 1 else g[lo:hi, :]
            _accum(t, piece)

    return _result(out_data, "concat", tuple(tensors), backward)


def row_mean(a: Tensor) -> Tensor:
    """Mean over rows of an (m, n) tensor, returned as (1, n)."""
    if a.data.ndim != 2:
        raise ShapeMismatchError(f"row_mean: expected 2-d, got {a.shape}")
    m = a.shape[0]
    out_data = a.data.mean(axis=0, keepdims=True)

    def backward(g):
        _accum(a, np.broadcast_to(g / m, a.data.shape).copy())

    return _result(out_data, "row_mean", (a,), backward)


def relu(a: Tensor) -> Tensor:
    out_data = np.maximum(a.data, 0.0)

    def backward(g):
        _accum(a, g * (out_data > 0.0))

    return _result(out_data, "relu", (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out_data = np.empty_like(x)
    pos = x >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out_data[~pos] = ex / (1.0 + ex)

    def backward(g):
        _accum(a, g * out_data * (1.0 - out_data))

    return _result(out_data, "sigmoid", (a,), backward)


def softmax(a: Tensor) -> Tensor:
    """Row-wise softmax over the last axis, max-subtracted for stability."""
    x = a.data
    shifted = x - x.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    out_data = ex / ex.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * out_data).sum(axis=-1, keepdims=True)
        _accum(a, out_data * (g - inner))

    return _result(out_data, "softmax", (a,), backward)


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out_data = np.log(a.data)

    def backward(g):
        _accum(a, g / a.data)

    return _result(out_data, "log", (a,), backward)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values into [lo, hi]; gradient passes only where unclamped."""
    out_data = np.clip(a.data, lo, hi)
    mask = (a.data >= lo) & (a.data <= hi)

    def backward(g):
        _accum(a, g * mask)

    return _result(out_data, "clip", (a,), backward)


def embedding_lookup(table: Tensor, indices) -> Tensor:
    """Gather rows of a (n, d) table; gradient scatter-adds into the table."""
    idx = np.asarray(indices, dtype=np.int64)
    if table.data.ndim != 2 or idx.ndim != 1:
        raise ShapeMismatchError(
            f"embedding_lookup: table {table.shape}, indices {idx.shape}"
        )
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeMismatchError(
            f"embedding_lookup: index out of range for table {table.shape}"
        )
    out_data = table.data[idx]

    def backward(g):
        if not table.requires_grad:
            return
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, idx, g)

    return _result(out_data, "embedding_lookup", (table,), backward)


def sum_all(a: Tensor) -> Tensor:
    out_data = np.asarray(a.data.sum())

    def backward(g):
        _accum(a, np.full(a.data.shape, float(g)))

    return _result(out_data, "sum_all", (a,), backward)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    out_data = np.asarray(a.data.sum() / n)

    def backward(g):
        _accum(a, np.full(a.data.shape, float(g) / n))

    return _result(out_data, "mean_all", (a,), backward)


def spmm(mat, x: Tensor) -> Tensor:
    """Constant sparse matrix times dense tensor: out = mat @ x.

    ``mat`` is a scipy sparse matrix and is not differentiated through."""
    if not sp.issparse(mat):
        raise TypeError("spmm expects a scipy sparse matrix")
    if x.data.ndim != 2 or mat.shape[1] != x.shape[0]:
        raise ShapeMismatchError(f"spmm: {mat.shape} @ {x.shape}")
    mat = mat.tocsr()
    out_data = np.asarray(mat @ x.data)

    def backward(g):
        _accum(x, np.asarray(mat.T @ g))

    return _result(out_data, "spmm", (x,), backward)


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(f, params, h: float = 1e-5) -> float:
    """Max relative error between tape gradients of ``f()`` and central
    finite differences over every coordinate of ``params``.

    ``f`` must rebuild its computation from the current parameter values on
    every call and return a scalar Tensor. Relative error per coordinate is
    |g_a - g_n| / max(1, |g_a|, |g_n|).
    """
    params = list(params)
    for p in params:
        p.grad = None
    with Tape() as tape:
        out = f()
        tape.backward(out)
    analytic = [
        np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params
    ]
    for p in params:
        p.grad = None

    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        ga_flat = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            with no_grad():
                fp = f().item()
            flat[i] = orig - h
            with no_grad():
                fm = f().item()
            flat[i] = orig
            gn = (fp - fm) / (2.0 * h)
            err = abs(ga_flat[i] - gn) / max(1.0, abs(ga_flat[i]), abs(gn))
            worst = max(worst, err)
    return worst

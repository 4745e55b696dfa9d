"""Reverse-mode automatic differentiation over dense float64 arrays.

Operations executed while a :class:`Tape` is active, and with at least one
input that carries a gradient node, are recorded in execution order. Records
are therefore topologically sorted by construction, and :func:`backward`
walks them once in reverse.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .. import _kernels


class ShapeError(ValueError):
    """Incompatible input shapes for an operation."""

    def __init__(self, kind: str, shapes: Iterable[tuple], detail: str = ""):
        self.kind = kind
        self.shapes = tuple(tuple(s) for s in shapes)
        msg = f"{kind}: incompatible shapes {', '.join(str(s) for s in self.shapes)}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


_TAPES: list["Tape"] = []


class Tape:
    """Ordered record of differentiable operations for one training step."""

    def __init__(self):
        self.records: list[Record] = []

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.remove(self)

    def __len__(self) -> int:
        return len(self.records)


def active_tape() -> Tape | None:
    return _TAPES[-1] if _TAPES else None


class Leaf:
    __slots__ = ("param",)

    def __init__(self, param: "Parameter"):
        self.param = param


class Record:
    __slots__ = ("kind", "parents", "backward", "tape", "index")

    def __init__(self, kind, parents, backward, tape, index):
        self.kind = kind
        self.parents = parents
        self.backward = backward
        self.tape = tape
        self.index = index


class Tensor:
    __slots__ = ("data", "node")
    __array_priority__ = 100.0

    def __init__(self, data, node=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.node = node

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def requires_grad(self) -> bool:
        return self.node is not None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def __repr__(self) -> str:
        grad = ", grad" if self.node is not None else ""
        return f"Tensor(shape={self.shape}{grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return slice_(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


class Parameter(Tensor):
    """A learnable leaf. Its node persists across tapes."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = ""):
        super().__init__(np.array(data, dtype=np.float64))
        self.node = Leaf(self)
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(kind: str, out: np.ndarray, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
    tape = active_tape()
    if tape is None or all(t.node is None for t in inputs):
        return Tensor(out)
    rec = Record(kind, tuple(t.node for t in inputs), backward, tape, len(tape.records))
    tape.records.append(rec)
    return Tensor(out, rec)


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_check(kind, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(kind, [a.shape, b.shape]) from None


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("add", a, b)
    sa, sb = a.shape, b.shape

    def bw(g, needs):
        return (unbroadcast(g, sa) if needs[0] else None,
                unbroadcast(g, sb) if needs[1] else None)

    return _emit("add", a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("sub", a, b)
    sa, sb = a.shape, b.shape

    def bw(g, needs):
        return (unbroadcast(g, sa) if needs[0] else None,
                unbroadcast(-g, sb) if needs[1] else None)

    return _emit("sub", a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("mul", a, b)
    ad, bd = a.data, b.data

    def bw(g, needs):
        return (unbroadcast(g * bd, ad.shape) if needs[0] else None,
                unbroadcast(g * ad, bd.shape) if needs[1] else None)

    return _emit("mul", ad * bd, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("div", a, b)
    ad, bd = a.data, b.data
    out = ad / bd

    def bw(g, needs):
        return (unbroadcast(g / bd, ad.shape) if needs[0] else None,
                unbroadcast(-g * out / bd, bd.shape) if needs[1] else None)

    return _emit("div", out, (a, b), bw)


def neg(x) -> Tensor:
    x = as_tensor(x)
    return _emit("neg", -x.data, (x,), lambda g, needs: (-g,))


def _unary(kind, x, out, local_grad):
    def bw(g, needs):
        return (g * local_grad(),)

    return _emit(kind, out, (x,), bw)


def relu(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    return _unary("relu", x, np.where(xd > 0, xd, 0.0), lambda: (xd > 0).astype(np.float64))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    s = _sigmoid(x.data)
    return _unary("sigmoid", x, s, lambda: s * (1.0 - s))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    t = np.tanh(x.data)
    return _unary("tanh", x, t, lambda: 1.0 - t * t)


def heaviside(x) -> Tensor:
    """Step function with the convention ``heaviside(0) == 1``; zero derivative."""
    x = as_tensor(x)
    out = (x.data >= 0).astype(np.float64)
    return _emit("heaviside", out, (x,), lambda g, needs: (np.zeros_like(g),))


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return _unary("exp", x, out, lambda: out)


def log(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    return _unary("log", x, np.log(xd), lambda: 1.0 / xd)


def square(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    return _unary("square", x, xd * xd, lambda: 2.0 * xd)


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    out = np.sqrt(x.data)
    return _unary("sqrt", x, out, lambda: 0.5 / out)


def abs_(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    return _unary("abs", x, np.abs(xd), lambda: np.sign(xd))


def sign(x) -> Tensor:
    x = as_tensor(x)
    return _emit("sign", np.sign(x.data), (x,), lambda g, needs: (np.zeros_like(g),))


# ---------------------------------------------------------------- reductions


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum_(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    axes = _norm_axis(axis, x.ndim)

    def bw(g, needs):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return _emit("sum", x.data.sum(axis=axes, keepdims=keepdims), (x,), bw)


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    axes = _norm_axis(axis, x.ndim)
    count = int(np.prod([shape[a] for a in axes])) if axes else 1

    def bw(g, needs):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, shape).copy(),)

    return _emit("mean", x.data.mean(axis=axes, keepdims=keepdims), (x,), bw)


def softmax(x, axis=-1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def bw(g, needs):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _emit("softmax", s, (x,), bw)


def log_softmax(x, axis=-1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse

    def bw(g, needs):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _emit("log_softmax", out, (x,), bw)


# ---------------------------------------------------------------- structure


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0 or b.ndim > 2 or a.shape[-1] != b.shape[0]:
        raise ShapeError("matmul", [a.shape, b.shape])
    ad, bd = a.data, b.data

    def bw(g, needs):
        ga = gb = None
        if b.ndim == 1:
            if needs[0]:
                ga = np.multiply.outer(g, bd)
            if needs[1]:
                gb = np.tensordot(ad, g, axes=(tuple(range(ad.ndim - 1)), tuple(range(g.ndim))))
            return ga, gb
        if needs[0]:
            ga = g @ bd.T
        if needs[1]:
            if ad.ndim == 1:
                gb = np.multiply.outer(ad, g)
            else:
                gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _emit("matmul", ad @ bd, (a, b), bw)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    nd = tensors[0].ndim
    ax = axis % nd
    for t in tensors[1:]:
        if t.ndim != nd or any(t.shape[i] != tensors[0].shape[i] for i in range(nd) if i != ax):
            raise ShapeError("concat", [u.shape for u in tensors])
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def bw(g, needs):
        return tuple(np.split(g, bounds, axis=ax))

    return _emit("concat", np.concatenate([t.data for t in tensors], axis=ax), tensors, bw)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if any(t.shape != tensors[0].shape for t in tensors):
        raise ShapeError("stack", [t.shape for t in tensors])
    n = len(tensors)

    def bw(g, needs):
        return tuple(np.take(g, i, axis=axis) for i in range(n))

    return _emit("stack", np.stack([t.data for t in tensors], axis=axis), tensors, bw)


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (slice, int, np.integer, type(None), type(Ellipsis))) for i in items)


def slice_(x, index) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    try:
        out = x.data[index]
    except IndexError as exc:
        raise ShapeError("slice", [shape], str(exc)) from None
    basic = _is_basic_index(index)

    def bw(g, needs):
        gx = np.zeros(shape)
        if basic:
            gx[index] = g
        else:
            np.add.at(gx, index, g)
        return (gx,)

    return _emit("slice", np.array(out, dtype=np.float64), (x,), bw)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", [old, tuple(shape)]) from None
    return _emit("reshape", out, (x,), lambda g, needs: (g.reshape(old),))


def gru_gates(gx, gh, h_prev) -> Tensor:
    """Fused GRU gate block: ``h' = (1-z) n + z h`` from pre-activations.

    ``gx``/``gh`` are (B, 3H) input/recurrent pre-activations ordered
    reset, update, candidate.
    """
    gx, gh, h_prev = as_tensor(gx), as_tensor(gh), as_tensor(h_prev)
    if h_prev.ndim != 2 or gx.shape != gh.shape or gx.shape != (h_prev.shape[0], 3 * h_prev.shape[1]):
        raise ShapeError("gru_gates", [gx.shape, gh.shape, h_prev.shape])
    ghd = np.ascontiguousarray(gh.data)
    hpd = np.ascontiguousarray(h_prev.data)
    h_new, r, z, n = _kernels.gru_gates_forward(np.ascontiguousarray(gx.data), ghd, hpd)

    def bw(g, needs):
        return _kernels.gru_gates_backward(np.ascontiguousarray(g), r, z, n, ghd, hpd)

    return _emit("gru_gates", h_new, (gx, gh, h_prev), bw)


def stop_gradient(x) -> Tensor:
    """Same values, no gradient path to anything upstream."""
    x = as_tensor(x)
    return Tensor(x.data)


_OPS = {
    "add": add, "sub": sub, "mul": mul, "div": div, "neg": neg, "matmul": matmul,
    "relu": relu, "sigmoid": sigmoid, "tanh": tanh, "heaviside": heaviside,
    "exp": exp, "log": log, "sum": sum_, "mean": mean, "softmax": softmax,
    "log_softmax": log_softmax, "concat": concat, "stack": stack, "slice": slice_,
    "reshape": reshape, "square": square, "sqrt": sqrt, "abs": abs_, "sign": sign,
    "gru_gates": gru_gates,
}


def tensor_op(kind: str, *inputs, **kwargs) -> Tensor:
    """Apply the operation named ``kind``; ``concat``/``stack`` take a list."""
    try:
        fn = _OPS[kind]
    except KeyError:
        raise ValueError(f"unknown tensor op {kind!r}") from None
    if kind in ("concat", "stack"):
        return fn(list(inputs), **kwargs)
    return fn(*inputs, **kwargs)


# ---------------------------------------------------------------- backward


def backward(loss: Tensor, wrt: Iterable[Parameter] | None = None) -> dict:
    """Gradients of scalar ``loss`` with respect to parameters.

    With ``wrt`` given, every listed parameter appears in the result and
    those not reachable from ``loss`` get exact zeros. Otherwise only the
    reached parameters are returned.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict = {}
    root = loss.node
    if isinstance(root, Record):
        grads[root] = np.ones_like(loss.data)
        records = root.tape.records
        for i in range(root.index, -1, -1):
            rec = records[i]
            g = grads.pop(rec, None)
            if g is None:
                continue
            parents = rec.parents
            ins = rec.backward(g, tuple(p is not None for p in parents))
            for p, gi in zip(parents, ins):
                if p is None or gi is None:
                    continue
                prev = grads.get(p)
                grads[p] = gi if prev is None else prev + gi
    elif isinstance(root, Leaf):
        grads[root] = np.ones_like(loss.data)

    if wrt is None:
        return {n.param: g.reshape(n.param.shape) for n, g in grads.items() if isinstance(n, Leaf)}
    out = {}
    for p in wrt:
        g = grads.get(p.node)
        out[p] = np.zeros_like(p.data) if g is None else g.reshape(p.shape)
    return out

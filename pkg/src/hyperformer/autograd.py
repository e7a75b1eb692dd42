"""Tape-based reverse-mode differentiation over dense numpy arrays.

Every op returns a new :class:`Tensor` that remembers its parents and a
closure pushing the output gradient back to them.  :func:`backward` walks
the graph in reverse topological order.  Leaf gradients (on
:class:`Parameter` and any ``requires_grad`` leaf) accumulate across calls
until :meth:`Parameter.zero_grad`.
"""
from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data)
        if self.data.dtype.kind not in "fc":
            self.data = self.data.astype(np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)


class Parameter(Tensor):
    """A trainable leaf tensor with a gradient accumulator."""

    __slots__ = ("trainable",)

    def __init__(self, data, name: str | None = None, trainable: bool = True):
        super().__init__(np.array(data, copy=True), requires_grad=trainable, name=name)
        self.trainable = trainable
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad.fill(0.0)

    @property
    def size(self) -> int:
        return int(self.data.size)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype)
    return Tensor(arr)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(op: str, a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def _coerce(a, b) -> tuple[Tensor, Tensor]:
    if not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    return a, b


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = _coerce(a, b)
    _check_broadcast("add", a.data, b.data)

    def back(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), back)


def sub(a, b) -> Tensor:
    a, b = _coerce(a, b)
    _check_broadcast("sub", a.data, b.data)

    def back(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), back)


def mul(a, b) -> Tensor:
    a, b = _coerce(a, b)
    _check_broadcast("mul", a.data, b.data)

    def back(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), back)


def div(a, b) -> Tensor:
    a, b = _coerce(a, b)
    _check_broadcast("div", a.data, b.data)
    out = a.data / b.data

    def back(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * out / b.data, b.shape))

    return _make(out, (a, b), back)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: x._accumulate(g * out))


def log(x: Tensor) -> Tensor:
    return _make(np.log(x.data), (x,), lambda g: x._accumulate(g / x.data))


def sin(x: Tensor) -> Tensor:
    return _make(np.sin(x.data), (x,), lambda g: x._accumulate(g * np.cos(x.data)))


def cos(x: Tensor) -> Tensor:
    return _make(np.cos(x.data), (x,), lambda g: x._accumulate(-g * np.sin(x.data)))


def sigmoid(x: Tensor) -> Tensor:
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ez = np.exp(x.data[~pos])
    out[~pos] = ez / (1.0 + ez)
    return _make(out, (x,), lambda g: x._accumulate(g * out * (1.0 - out)))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _make(out, (x,), lambda g: x._accumulate(g * (1.0 - out * out)))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make(x.data * mask, (x,), lambda g: x._accumulate(g * mask))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    """Tanh approximation of GELU."""
    v = x.data
    inner = _GELU_C * (v + 0.044715 * v**3)
    t = np.tanh(inner)
    out = 0.5 * v * (1.0 + t)

    def back(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * v**2)
        x._accumulate(g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * dinner))

    return _make(out, (x,), back)


def detach(x: Tensor) -> Tensor:
    return Tensor(x.data)


# ---------------------------------------------------------------- reductions / shape


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        x._accumulate(np.broadcast_to(g, x.shape))

    return _make(np.asarray(out), (x,), back)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = x.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum_(x, axis, keepdims), 1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    return _make(x.data.reshape(shape), (x,), lambda g: x._accumulate(g.reshape(x.shape)))


def transpose(x: Tensor, axes=None) -> Tensor:
    inv = None if axes is None else tuple(np.argsort(axes))
    return _make(np.transpose(x.data, axes), (x,), lambda g: x._accumulate(np.transpose(g, inv)))


def take(x: Tensor, index) -> Tensor:
    """Basic or advanced indexing; the reverse pass scatters with ``np.add.at``."""

    basic = _is_basic_index(index)

    def back(g):
        full = np.zeros_like(x.data)
        if basic:
            full[index] += g
        else:
            np.add.at(full, index, g)
        x._accumulate(full)

    return _make(x.data[index], (x,), back)


def _is_basic_index(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (slice, int, type(None), type(Ellipsis))) for p in parts)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeError(f"concat: incompatible shapes {ref} and {t.shape} on axis {axis}")
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def back(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[ax] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    return _make(np.concatenate([t.data for t in tensors], axis=ax), tensors, back)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    expanded = [reshape(t, t.shape[:axis % (t.ndim + 1)] + (1,) + t.shape[axis % (t.ndim + 1):]) for t in tensors]
    return concat(expanded, axis=axis)


def split(x: Tensor, sections: int, axis: int = -1) -> list[Tensor]:
    n = x.shape[axis]
    if n % sections:
        raise ShapeError(f"split: extent {n} not divisible into {sections} parts")
    step = n // sections
    out = []
    for i in range(sections):
        sl = [slice(None)] * x.ndim
        sl[axis] = slice(i * step, (i + 1) * step)
        out.append(take(x, tuple(sl)))
    return out


def where(mask: np.ndarray, a, b) -> Tensor:
    """Select from ``a`` where ``mask`` is true, else ``b`` (mask is constant)."""
    a, b = _coerce(a, b)
    mask = np.asarray(mask, dtype=bool)

    def back(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(np.where(mask, g, 0.0), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.where(mask, 0.0, g), b.shape))

    return _make(np.where(mask, a.data, b.data), (a, b), back)


def index_add(base_shape: tuple[int, ...], index: np.ndarray, src: Tensor) -> Tensor:
    """Zeros of ``base_shape`` with rows of ``src`` added at ``index`` along axis 0."""
    out = np.zeros(base_shape, dtype=src.dtype)
    np.add.at(out, index, src.data)
    return _make(out, (src,), lambda g: src._accumulate(g[index]))


# ---------------------------------------------------------------- linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _coerce(a, b)
    if a.ndim < 1 or b.ndim < 1 or a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    if b.ndim == 1 or a.ndim == 1:
        raise ShapeError(f"matmul: expects at least 2-D operands, got {a.shape} and {b.shape}")
    out = np.matmul(a.data, b.data)

    def back(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        if b.requires_grad:
            if b.ndim == 2:
                gb = np.matmul(a.data.reshape(-1, a.shape[-1]).T, g.reshape(-1, g.shape[-1]))
            else:
                gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
            b._accumulate(gb)

    return _make(out, (a, b), back)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = matmul(x, w)
    return y if b is None else add(y, b)


# ---------------------------------------------------------------- normalisation


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        x._accumulate(out * (g - (g * out).sum(axis=axis, keepdims=True)))

    return _make(out, (x,), back)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse

    def back(g):
        x._accumulate(g - np.exp(out) * g.sum(axis=axis, keepdims=True))

    return _make(out, (x,), back)


def layer_norm(x: Tensor, gamma: Tensor | None = None, beta: Tensor | None = None, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then apply the optional affine map."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def back_x(g):
        x._accumulate(inv * (g - g.mean(axis=-1, keepdims=True) - xhat * (g * xhat).mean(axis=-1, keepdims=True)))

    normed = _make(xhat, (x,), back_x)
    if gamma is not None:
        normed = mul(normed, gamma)
    if beta is not None:
        normed = add(normed, beta)
    return normed


# ---------------------------------------------------------------- lookup / regularisation


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"embedding: id out of range for table of {table.shape[0]} rows")
    return take(table, ids)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; identity in eval mode or at rate 0."""
    if not training or rate <= 0.0:
        return x
    if rate >= 1.0:
        raise ValueError("dropout rate must be < 1")
    if rng is None:
        raise ValueError("dropout in train mode needs an rng")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return mul(x, Tensor(keep))


# ---------------------------------------------------------------- convolution


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, padding: str = "circular") -> Tensor:
    """'Same' 2-D cross-correlation.

    ``x`` is (B, C_in, H, W), ``w`` is (C_out, C_in, k, k) with odd ``k``.
    """
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-D input and kernel, got {x.shape} and {w.shape}")
    c_out, c_in, kh, kw = w.shape
    if kh != kw or kh % 2 == 0:
        raise ShapeError(f"conv2d: kernel must be square with odd size, got {kh}x{kw}")
    if x.shape[1] != c_in:
        raise ShapeError(f"conv2d: input channels {x.shape[1]} != kernel channels {c_in}")
    if padding not in ("circular", "zero"):
        raise ValueError(f"unknown padding {padding!r}")
    k = kh
    p = k // 2
    B, _, H, W = x.shape
    mode = "wrap" if padding == "circular" else "constant"
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p)), mode=mode)
    if xp.shape[2] < k or xp.shape[3] < k:
        raise ShapeError(f"conv2d: kernel {k} larger than padded input {xp.shape[2:]}")
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # B, C_in, H, W, k, k
    out = np.einsum("bchwij,ocij->bohw", win, w.data, optimize=True)
    if b is not None:
        out = out + b.data[None, :, None, None]

    def back(g):
        if w.requires_grad:
            w._accumulate(np.einsum("bohw,bchwij->ocij", g, win, optimize=True))
        if b is not None and b.requires_grad:
            b._accumulate(g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    gp[:, :, i:i + H, j:j + W] += np.einsum("bohw,oc->bchw", g, w.data[:, :, i, j])
            if padding == "zero":
                gx = gp[:, :, p:p + H, p:p + W]
            else:
                rows = (np.arange(H + 2 * p) - p) % H
                cols = (np.arange(W + 2 * p) - p) % W
                gh = np.zeros((B, c_in, H, W + 2 * p), dtype=gp.dtype)
                np.add.at(gh, (slice(None), slice(None), rows), gp)
                gx = np.zeros((B, c_in, H, W), dtype=gp.dtype)
                np.add.at(gx, (slice(None), slice(None), slice(None), cols), gh)
            x._accumulate(gx)

    parents = (x, w) if b is None else (x, w, b)
    return _make(out, parents, back)


# ---------------------------------------------------------------- reverse pass


def _topo(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, grad: np.ndarray | None = None) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``."""
    if not loss.requires_grad:
        return
    if grad is None:
        if loss.data.size != 1:
            raise ShapeError(f"backward: implicit seed needs a scalar, got shape {loss.shape}")
        grad = np.ones_like(loss.data)
    order = _topo(loss)
    for node in order:
        if not node.is_leaf:
            node.grad = None
    if loss.is_leaf:
        loss._accumulate(grad)
        return
    loss.grad = np.array(grad, dtype=loss.dtype)
    for node in reversed(order):
        if node.is_leaf or node.grad is None:
            continue
        node._backward(node.grad)
        node.grad = None


# ---------------------------------------------------------------- finite differences


def grad_check(
    fn: Callable[[], Tensor],
    inputs: Iterable[Tensor],
    h: float = 1e-5,
) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``fn`` recomputes a scalar from the current values of ``inputs`` (64-bit
    arrays mutated in place).  Relative error per element is
    ``|a - b| / max(|a|, |b|, 1e-8)``.
    """
    inputs = list(inputs)
    for t in inputs:
        if t.dtype != np.float64:
            raise TypeError("grad_check needs 64-bit inputs")
        t.requires_grad = True
        t.grad = None
    out = fn()
    backward(out)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]
    worst = 0.0
    for t, a in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            with no_grad():
                fp = float(fn().data)
            flat[i] = orig - h
            with no_grad():
                fm = float(fn().data)
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * h)
            ai = a.reshape(-1)[i]
            err = abs(ai - numeric) / max(abs(ai), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst

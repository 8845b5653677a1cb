"""Minimal reverse-mode autodiff over dense float64 numpy arrays.

Covers exactly what the transformer and the linear probes need: matmul
with leading batch axes, right-aligned broadcasting for elementwise ops,
softmax / layernorm / gelu primitives with hand-written backwards, and a
gather/scatter pair for patch selection. Forward values are plain numpy;
backward() walks the recorded graph once in reverse topological order.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, ShapeError


class Tensor:
    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None
        self._done = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        tag = self.name or "tensor"
        return f"Tensor({tag}, shape={self.data.shape}, grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
            self.grad = self.grad.reshape(self.data.shape)
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Populate grad on every reachable requires_grad tensor.

        The recorded graph is consumed; a second backward on the same
        result raises.
        """
        if self.data.size != 1:
            raise ContractError(f"backward needs a scalar, got shape {self.shape}")
        if self._done:
            raise ContractError("backward already ran for this graph; re-run forward")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)
                node._backward_fn = None
            node._done = True

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, -as_tensor(other))

    def __rsub__(self, other):
        return add(as_tensor(other), -self)

    def __truediv__(self, scalar):
        if isinstance(scalar, Tensor):
            raise ContractError("division only by python scalars")
        return mul(self, 1.0 / scalar)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes the forward broadcast introduced."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _make(data, parents, backward_fn) -> Tensor:
    out = Tensor(data)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    return out


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"add: {a.shape} vs {b.shape}") from exc

    def bwd(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(data, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"mul: {a.shape} vs {b.shape}") from exc

    def bwd(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), bwd)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError("matmul operands need at least 2 dimensions")
    try:
        data = a.data @ b.data
    except ValueError as exc:
        raise ShapeError(f"matmul: {a.shape} vs {b.shape}") from exc

    def bwd(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _make(data, (a, b), bwd)


def transpose(t: Tensor, axes: tuple[int, ...] | None = None) -> Tensor:
    t = as_tensor(t)
    if axes is None:
        axes = tuple(range(t.data.ndim - 2)) + (t.data.ndim - 1, t.data.ndim - 2)
    inverse = tuple(np.argsort(axes))

    def bwd(g):
        t._accumulate(np.transpose(g, inverse))

    return _make(np.transpose(t.data, axes), (t,), bwd)


def reshape(t: Tensor, shape) -> Tensor:
    t = as_tensor(t)
    old = t.shape

    def bwd(g):
        t._accumulate(g.reshape(old))

    try:
        data = t.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: {old} -> {shape}") from exc
    return _make(data, (t,), bwd)


def tsum(t: Tensor, axis=None) -> Tensor:
    t = as_tensor(t)

    def bwd(g):
        if axis is None:
            t._accumulate(np.broadcast_to(g, t.shape).copy())
        else:
            t._accumulate(np.broadcast_to(np.expand_dims(g, axis), t.shape).copy())

    return _make(t.data.sum(axis=axis), (t,), bwd)


def mean(t: Tensor, axis=None) -> Tensor:
    t = as_tensor(t)
    if axis is None:
        count = t.data.size
    elif isinstance(axis, tuple):
        count = int(np.prod([t.data.shape[a] for a in axis]))
    else:
        count = t.data.shape[axis]

    def bwd(g):
        if axis is None:
            t._accumulate(np.broadcast_to(g / count, t.shape).copy())
        else:
            t._accumulate(
                np.broadcast_to(np.expand_dims(g, axis) / count, t.shape).copy())

    return _make(t.data.mean(axis=axis), (t,), bwd)


def softmax(t: Tensor, axis: int = -1) -> Tensor:
    t = as_tensor(t)
    if t.data.shape == () or t.data.shape[axis] == 0:
        raise ShapeError("softmax needs a non-empty axis")
    shifted = t.data - t.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        t._accumulate(y * (g - inner))

    return _make(y, (t,), bwd)


def layernorm(t: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize over the last axis (no affine; scale/shift separately)."""
    t = as_tensor(t)
    mu = t.data.mean(axis=-1, keepdims=True)
    var = t.data.var(axis=-1, keepdims=True)
    s = np.sqrt(var + eps)
    y = (t.data - mu) / s

    def bwd(g):
        gm = g.mean(axis=-1, keepdims=True)
        gym = (g * y).mean(axis=-1, keepdims=True)
        t._accumulate((g - gm - y * gym) / s)

    return _make(y, (t,), bwd)


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(t: Tensor) -> Tensor:
    """tanh-approximation gelu with its exact derivative."""
    t = as_tensor(t)
    x = t.data
    x2 = x * x
    th = np.tanh(_GELU_C * (x + 0.044715 * (x2 * x)))
    y = 0.5 * x * (1.0 + th)

    def bwd(g):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x2)
        dy = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * d_inner
        t._accumulate(g * dy)

    return _make(y, (t,), bwd)


def sigmoid(t: Tensor) -> Tensor:
    t = as_tensor(t)
    y = 1.0 / (1.0 + np.exp(-t.data))

    def bwd(g):
        t._accumulate(g * y * (1.0 - y))

    return _make(y, (t,), bwd)


def softplus(t: Tensor) -> Tensor:
    """log(1 + e^x), computed stably; derivative is the sigmoid."""
    t = as_tensor(t)
    x = t.data
    y = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))

    def bwd(g):
        t._accumulate(g / (1.0 + np.exp(-x)))

    return _make(y, (t,), bwd)


def take_patches(t: Tensor, idx: np.ndarray) -> Tensor:
    """Gather rows along axis 1: (B, P, D)[:, idx_b] -> (B, K, D)."""
    t = as_tensor(t)
    if t.data.ndim != 3 or idx.ndim != 2:
        raise ShapeError(f"take_patches wants (B,P,D) and (B,K), got "
                         f"{t.shape} and {idx.shape}")
    batch = np.arange(t.data.shape[0])[:, None]
    data = t.data[batch, idx]

    def bwd(g):
        full = np.zeros_like(t.data)
        np.add.at(full, (batch, idx), g)
        t._accumulate(full)

    return _make(data, (t,), bwd)


def scatter_patches(src: Tensor, idx: np.ndarray, n_total: int) -> Tensor:
    """Adjoint of take_patches: place (B, K, D) rows into zeros (B, P, D)."""
    src = as_tensor(src)
    if src.data.ndim != 3 or idx.ndim != 2:
        raise ShapeError(f"scatter_patches wants (B,K,D) and (B,K), got "
                         f"{src.shape} and {idx.shape}")
    b, _, d = src.data.shape
    batch = np.arange(b)[:, None]
    data = np.zeros((b, n_total, d))
    np.add.at(data, (batch, idx), src.data)

    def bwd(g):
        src._accumulate(g[batch, idx])

    return _make(data, (src,), bwd)

"""Dense float64 arrays with reverse-mode differentiation.

Deliberately small: rank-2/3 arrays, the op set the encoders and decoder
need, one tape per forward pass. A tape is single-threaded; independent
tapes may run concurrently and accumulate gradients into shared leaves.
"""
from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar, got shape {self.shape}")
        topo: list[Tensor] = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

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

    def __repr__(self):
        return f"Tensor(shape={self.shape}, grad={'yes' if self.requires_grad else 'no'})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data, parents=(a, b))

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g, b.data.shape))

    out._backward = backward if out.requires_grad else None
    return out


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data - b.data, parents=(a, b))

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(-g, b.data.shape))

    out._backward = backward if out.requires_grad else None
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data, parents=(a, b))

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * a.data, b.data.shape))

    out._backward = backward if out.requires_grad else None
    return out


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data / b.data, parents=(a, b))

    def backward(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    out._backward = backward if out.requires_grad else None
    return out


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.shape[-1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data, parents=(a, b))

    def backward(g):
        if a.requires_grad:
            a.accumulate(g @ b.data.T)
        if b.requires_grad:
            b.accumulate(a.data.T @ g)

    out._backward = backward if out.requires_grad else None
    return out


def _unary(a, value, dvalue) -> Tensor:
    a = as_tensor(a)
    out = Tensor(value, parents=(a,))
    if out.requires_grad:
        out._backward = lambda g: a.accumulate(g * dvalue)
    return out


def exp(a) -> Tensor:
    a = as_tensor(a)
    v = np.exp(a.data)
    return _unary(a, v, v)


def log(a) -> Tensor:
    a = as_tensor(a)
    return _unary(a, np.log(a.data), 1.0 / a.data)


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    v = np.sqrt(a.data)
    return _unary(a, v, 0.5 / v)


def absolute(a) -> Tensor:
    a = as_tensor(a)
    return _unary(a, np.abs(a.data), np.sign(a.data))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    v = np.tanh(a.data)
    return _unary(a, v, 1.0 - v * v)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    v = 1.0 / (1.0 + np.exp(-a.data))
    return _unary(a, v, v * (1.0 - v))


def relu(a) -> Tensor:
    a = as_tensor(a)
    return _unary(a, np.maximum(a.data, 0.0), (a.data > 0).astype(np.float64))


def elu(a, alpha=1.0) -> Tensor:
    a = as_tensor(a)
    ex = np.exp(np.minimum(a.data, 0.0))
    v = np.where(a.data > 0, a.data, alpha * (ex - 1.0))
    return _unary(a, v, np.where(a.data > 0, 1.0, alpha * ex))


def leaky_relu(a, slope=0.2) -> Tensor:
    a = as_tensor(a)
    v = np.where(a.data > 0, a.data, slope * a.data)
    return _unary(a, v, np.where(a.data > 0, 1.0, slope))


def softplus(a) -> Tensor:
    a = as_tensor(a)
    # overflow-safe: log(1+e^x) = max(x,0) + log1p(e^-|x|)
    v = np.maximum(a.data, 0.0) + np.log1p(np.exp(-np.abs(a.data)))
    return _unary(a, v, 1.0 / (1.0 + np.exp(-a.data)))


def clamp_min(a, lo: float) -> Tensor:
    """max(a, lo) elementwise; gradient passes only where a > lo."""
    a = as_tensor(a)
    return _unary(a, np.maximum(a.data, lo), (a.data > lo).astype(np.float64))


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims), parents=(a,))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a.accumulate(np.broadcast_to(g, a.data.shape).copy())

    out._backward = backward if out.requires_grad else None
    return out


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def softmax(a, axis=-1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    v = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(v, parents=(a,))

    def backward(g):
        dot = (g * v).sum(axis=axis, keepdims=True)
        a.accumulate(v * (g - dot))

    out._backward = backward if out.requires_grad else None
    return out


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), parents=tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t.accumulate(g[tuple(idx)])

    out._backward = backward if out.requires_grad else None
    return out


def stack_rows(tensors) -> Tensor:
    """Stack 1-D tensors into a matrix (rows in order)."""
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.stack([t.data for t in tensors]), parents=tuple(tensors))

    def backward(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t.accumulate(g[i])

    out._backward = backward if out.requires_grad else None
    return out


def gather_rows(a, index) -> Tensor:
    """Select rows of a rank-2 tensor; repeated indices accumulate on backward."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.intp)
    out = Tensor(a.data[index], parents=(a,))

    def backward(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, index, g)
        a.accumulate(buf)

    out._backward = backward if out.requires_grad else None
    return out


def take_row(a, i) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data[i], parents=(a,))

    def backward(g):
        buf = np.zeros_like(a.data)
        buf[i] = g
        a.accumulate(buf)

    out._backward = backward if out.requires_grad else None
    return out


def narrow(a, axis, start, length) -> Tensor:
    a = as_tensor(a)
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = Tensor(a.data[idx], parents=(a,))

    def backward(g):
        buf = np.zeros_like(a.data)
        buf[idx] = g
        a.accumulate(buf)

    out._backward = backward if out.requires_grad else None
    return out


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.reshape(shape), parents=(a,))
    if out.requires_grad:
        out._backward = lambda g: a.accumulate(g.reshape(a.data.shape))
    return out


def transpose(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.T, parents=(a,))
    if out.requires_grad:
        out._backward = lambda g: a.accumulate(g.T)
    return out

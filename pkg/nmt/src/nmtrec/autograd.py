"""Minimal reverse-mode automatic differentiation over numpy arrays.

Just enough surface for a small transformer: broadcasting elementwise
arithmetic, batched matmul, tanh, exp/log/sqrt, axis reductions, reshape
and transpose, and row gathering for embeddings and pooling.  Everything
runs in float64 so finite-difference checks are meaningful.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def detach(self):
        return Tensor(self.data.copy())

    # -- graph plumbing ----------------------------------------------------

    @staticmethod
    def _lift(value):
        return value if isinstance(value, Tensor) else Tensor(value)

    @classmethod
    def _node(cls, data, parents, backward):
        out = cls(data, requires_grad=any(p.requires_grad for p in parents))
        if out.requires_grad:
            out._parents = parents
            out._backward = backward
        return out

    def backward(self, grad=None):
        if grad is None:
            grad = np.ones_like(self.data)
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))

        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(topo):
            node_grad = grads.pop(id(node), None)
            if node_grad is None:
                continue
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += node_grad
            if node._backward is None:
                continue
            for parent, parent_grad in zip(node._parents,
                                           node._backward(node_grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + parent_grad
                else:
                    grads[key] = parent_grad

    def zero_grad(self):
        self.grad = None

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        other = self._lift(other)
        out_data = self.data + other.data
        return Tensor._node(out_data, (self, other), lambda g: (
            _unbroadcast(g, self.shape), _unbroadcast(g, other.shape)))

    __radd__ = __add__

    def __sub__(self, other):
        other = self._lift(other)
        out_data = self.data - other.data
        return Tensor._node(out_data, (self, other), lambda g: (
            _unbroadcast(g, self.shape), _unbroadcast(-g, other.shape)))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        other = self._lift(other)
        out_data = self.data * other.data
        return Tensor._node(out_data, (self, other), lambda g: (
            _unbroadcast(g * other.data, self.shape),
            _unbroadcast(g * self.data, other.shape)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other)
        out_data = self.data / other.data
        return Tensor._node(out_data, (self, other), lambda g: (
            _unbroadcast(g / other.data, self.shape),
            _unbroadcast(-g * self.data / (other.data ** 2), other.shape)))

    def __neg__(self):
        return Tensor._node(-self.data, (self,), lambda g: (-g,))

    def matmul(self, other):
        other = self._lift(other)
        out_data = np.matmul(self.data, other.data)

        def backward(g):
            ga = np.matmul(g, np.swapaxes(other.data, -1, -2))
            gb = np.matmul(np.swapaxes(self.data, -1, -2), g)
            return (_unbroadcast(ga, self.shape), _unbroadcast(gb, other.shape))

        return Tensor._node(out_data, (self, other), backward)

    __matmul__ = matmul

    # -- nonlinearities --------------------------------------------------------

    def tanh(self):
        out_data = np.tanh(self.data)
        return Tensor._node(out_data, (self,),
                            lambda g: (g * (1.0 - out_data ** 2),))

    def exp(self):
        out_data = np.exp(self.data)
        return Tensor._node(out_data, (self,), lambda g: (g * out_data,))

    def log(self):
        return Tensor._node(np.log(self.data), (self,),
                            lambda g: (g / self.data,))

    def sqrt(self):
        out_data = np.sqrt(self.data)
        return Tensor._node(out_data, (self,),
                            lambda g: (g / (2.0 * out_data),))

    # -- shape ---------------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            g = np.asarray(g)
            if axis is None:
                return (np.broadcast_to(g, self.shape).copy(),)
            if not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, self.shape).copy(),)

        return Tensor._node(out_data, (self,), backward)

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape):
        old = self.shape
        return Tensor._node(self.data.reshape(*shape), (self,),
                            lambda g: (g.reshape(old),))

    def transpose(self, *axes):
        axes = axes or tuple(reversed(range(self.data.ndim)))
        inverse = np.argsort(axes)
        return Tensor._node(self.data.transpose(axes), (self,),
                            lambda g: (g.transpose(inverse),))

    def gather_rows(self, indices):
        """Select rows of a 2D tensor; duplicates accumulate on backward."""
        indices = np.asarray(indices, dtype=np.int64)
        out_data = self.data[indices]

        def backward(g):
            grad = np.zeros_like(self.data)
            np.add.at(grad, indices, g)
            return (grad,)

        return Tensor._node(out_data, (self,), backward)


def softmax(x, axis=-1):
    shifted = x - Tensor(np.max(x.data, axis=axis, keepdims=True))
    e = shifted.exp()
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x, axis=-1):
    shifted = x - Tensor(np.max(x.data, axis=axis, keepdims=True))
    return shifted - shifted.exp().sum(axis=axis, keepdims=True).log()


def gradient_check(fn, params, eps=1e-6, rtol=1e-4, atol=1e-7):
    """Compare analytic and central-difference gradients.

    Returns the worst violation ratio |a - n| / (atol + rtol * scale);
    values below 1 mean every coordinate agrees within `rtol` relative,
    with `atol` absorbing finite-difference noise on near-zero gradients.
    `fn() -> Tensor scalar`; `params` is an iterable of Tensors.
    """
    loss = fn()
    for p in params:
        p.zero_grad()
    loss.backward()
    worst = 0.0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + eps
            hi = fn().data
            flat[i] = original - eps
            lo = fn().data
            flat[i] = original
            numeric = (hi - lo) / (2 * eps)
            a = analytic.reshape(-1)[i]
            tolerance = atol + rtol * max(abs(a), abs(numeric))
            worst = max(worst, abs(a - numeric) / tolerance)
    return worst

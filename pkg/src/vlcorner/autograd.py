"""Minimal reverse-mode automatic differentiation over numpy arrays.

Only the operations the corner regressor needs are provided. Images are
NHWC. Every op checks its output for non-finite values and every backward
closure checks the gradients it produces, raising ``NumericalError`` with the
op name so a blow-up can be traced to a layer.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError, NumericalError
from .metrics import INVISIBLE_WEIGHT


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None, parents=(), backward=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.name = name
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(name={self.name!r}, shape={self.data.shape})"

    def _accumulate(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None):
        """Propagate gradients to every ancestor that requires them."""
        if grad is None:
            if self.data.size != 1:
                raise InputError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        order, seen = [], set()

        # iterative post-order DFS; the graphs here are shallow but batch-sized
        stack = [(self, False)]
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
                if id(p) not in seen:
                    stack.append((p, False))

        self._accumulate(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _check(arr, op):
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite values in {op}")
    return arr


def _op(data, parents, backward, name):
    return Tensor(_check(data, f"{name} forward"), parents=parents, backward=backward, name=name)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor, stride=2, pad=1, name="conv") -> Tensor:
    """Cross-correlation of an NHWC batch with a (k, k, C_in, C_out) kernel."""
    if x.data.ndim != 4:
        raise InputError(f"{name}: expected NHWC input, got shape {x.shape}")
    k, k2, cin, cout = kernel.shape
    if k != k2 or x.shape[3] != cin:
        raise InputError(f"{name}: input channels {x.shape[3]} do not match kernel {kernel.shape}")
    n, height, width, _ = x.shape
    ho = (height + 2 * pad - k) // stride + 1
    wo = (width + 2 * pad - k) // stride + 1
    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    cols = np.empty((n, ho, wo, k, k, cin), dtype=x.data.dtype)
    for di in range(k):
        for dj in range(k):
            cols[:, :, :, di, dj, :] = xp[:, di:di + stride * ho:stride, dj:dj + stride * wo:stride, :]
    cols2 = cols.reshape(n * ho * wo, k * k * cin)
    w2 = kernel.data.reshape(k * k * cin, cout)
    out = (cols2 @ w2).reshape(n, ho, wo, cout) + bias.data

    def backward(g):
        g2 = g.reshape(n * ho * wo, cout)
        if kernel.requires_grad:
            kernel._accumulate(_check((cols2.T @ g2).reshape(kernel.shape), f"{name} kernel grad"))
        if bias.requires_grad:
            bias._accumulate(_check(g2.sum(axis=0), f"{name} bias grad"))
        if x.requires_grad:
            dcols = (g2 @ w2.T).reshape(n, ho, wo, k, k, cin)
            dxp = np.zeros_like(xp)
            for di in range(k):
                for dj in range(k):
                    dxp[:, di:di + stride * ho:stride, dj:dj + stride * wo:stride, :] += dcols[:, :, :, di, dj, :]
            x._accumulate(_check(dxp[:, pad:pad + height, pad:pad + width, :], f"{name} input grad"))

    return _op(out, (x, kernel, bias), backward, name)


def tanh(x: Tensor, name="tanh") -> Tensor:
    y = np.tanh(x.data)

    def backward(g):
        x._accumulate(_check(g * (1.0 - y * y), f"{name} grad"))

    return _op(y, (x,), backward, name)


def global_avg_pool(x: Tensor, name="pool") -> Tensor:
    """NHWC -> NC mean over the spatial axes."""
    n, height, width, c = x.shape
    out = x.data.mean(axis=(1, 2))

    def backward(g):
        scale = np.asarray(1.0 / (height * width), dtype=x.data.dtype)
        x._accumulate(_check(np.broadcast_to(g[:, None, None, :] * scale, x.shape), f"{name} grad"))

    return _op(out, (x,), backward, name)


def dense(x: Tensor, weight: Tensor, bias: Tensor, name="dense") -> Tensor:
    if x.data.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise InputError(f"{name}: input {x.shape} incompatible with weight {weight.shape}")
    out = x.data @ weight.data + bias.data

    def backward(g):
        if weight.requires_grad:
            weight._accumulate(_check(x.data.T @ g, f"{name} weight grad"))
        if bias.requires_grad:
            bias._accumulate(_check(g.sum(axis=0), f"{name} bias grad"))
        if x.requires_grad:
            x._accumulate(_check(g @ weight.data.T, f"{name} input grad"))

    return _op(out, (x, weight, bias), backward, name)


def masked_corner_loss(pred: Tensor, targets, mask, name="loss") -> Tensor:
    """Differentiable masked corner loss; ``pred`` is (N, 8).

    The norm's subgradient at a zero residual is taken as 0.
    """
    n = pred.shape[0]
    p = pred.data.reshape(n, 4, 2)
    t = np.asarray(targets, dtype=pred.data.dtype).reshape(n, 4, 2)
    mask = np.asarray(mask, dtype=bool).reshape(n, 4)
    v = mask.sum(axis=1)
    if v.min(initial=1) < 1:
        raise InputError("masked_corner_loss: example with zero visible corners")
    w = np.where(mask, 1.0, INVISIBLE_WEIGHT).astype(pred.data.dtype)[..., None]
    r = p * w - t
    norms = np.sqrt((r * r).sum(axis=-1))
    loss = np.asarray((norms.sum(axis=1) / v).mean(), dtype=pred.data.dtype)

    def backward(g):
        safe = np.where(norms > 0, norms, 1.0)[..., None]
        unit = np.where(norms[..., None] > 0, r / safe, 0.0)
        dp = unit * w / (n * v)[:, None, None]
        pred._accumulate(_check((g * dp).reshape(pred.shape), f"{name} grad"))

    return _op(loss, (pred,), backward, name)

"""A small reverse-mode automatic differentiation engine over numpy arrays."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch


_FLOATS = (np.dtype(np.float64), np.dtype(np.float32))


class Tensor:
    """An array node in the computation graph.

    ``backward()`` on a scalar tensor fills ``grad`` of every upstream tensor
    that requires gradients.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None):
        data = np.asarray(data)
        self.data = data if data.dtype in _FLOATS else data.astype(float)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, name={self.name!r})"

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeMismatch("backward() without a seed needs a scalar tensor")
            grad = np.ones_like(self.data)
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node._accumulate(g)
            if node._backward is not None:
                for parent, pg in zip(node._parents, node._backward(g)):
                    if pg is None:
                        continue
                    if id(parent) in grads:
                        grads[id(parent)] = grads[id(parent)] + pg
                    else:
                        grads[id(parent)] = pg

    def __add__(self, other):
        return add(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data
    sa, sb = a.shape, b.shape
    return Tensor(out, _parents=(a, b),
                  _backward=lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul shapes {a.shape} @ {b.shape}")
    A, B = a.data, b.data
    return Tensor(A @ B, _parents=(a, b), _backward=lambda g: (g @ B.T, A.T @ g))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor(x.data * mask, _parents=(x,), _backward=lambda g: (g * mask,))


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return Tensor(x.data.reshape(shape), _parents=(x,), _backward=lambda g: (g.reshape(old),))


def flatten(x: Tensor) -> Tensor:
    return reshape(x, (x.shape[0], -1))


def _im2col(xt, k, stride, Ho, Wo):
    """Patches of a padded NHWC array as rows ordered (i, j, channel)."""
    N, C = xt.shape[0], xt.shape[3]
    cols = np.empty((N, Ho, Wo, k, k, C), dtype=xt.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, :, i, j, :] = xt[:, i:i + stride * Ho:stride, j:j + stride * Wo:stride, :]
    return cols.reshape(N * Ho * Wo, k * k * C)


def conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation, ``x`` (N, C, H, W), ``w`` (O, C, k, k)."""
    if x.data.ndim != 4 or w.data.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeMismatch(f"conv2d shapes {x.shape} * {w.shape}")
    N, C, H, W = x.shape
    O, _, k, k2 = w.shape
    if k != k2:
        raise ShapeMismatch("only square kernels are supported")
    p = padding
    xt = np.zeros((N, H + 2 * p, W + 2 * p, C), dtype=x.data.dtype)
    xt[:, p:p + H, p:p + W, :] = x.data.transpose(0, 2, 3, 1)
    Ho = (H + 2 * p - k) // stride + 1
    Wo = (W + 2 * p - k) // stride + 1
    cols = _im2col(xt, k, stride, Ho, Wo)
    wmat = w.data.transpose(2, 3, 1, 0).reshape(k * k * C, O)
    out = (cols @ wmat).reshape(N, Ho, Wo, O).transpose(0, 3, 1, 2)

    def backward(g):
        gt = g.transpose(0, 2, 3, 1)
        gw = (cols.T @ gt.reshape(N * Ho * Wo, O)).reshape(k, k, C, O).transpose(3, 2, 0, 1)
        # input gradient as a stride-1 correlation of the dilated, padded output
        # gradient with the flipped kernel
        q = k - 1 - p
        gd = np.zeros((N, H + k - 1, W + k - 1, O), dtype=g.dtype)
        hd = (Ho - 1) * stride + 1
        wd = (Wo - 1) * stride + 1
        gd[:, q:q + hd:stride, q:q + wd:stride, :] = gt[:, :, :, :]
        wflip = w.data[:, :, ::-1, ::-1].transpose(2, 3, 0, 1).reshape(k * k * O, C)
        gx = (_im2col(gd, k, 1, H, W) @ wflip).reshape(N, H, W, C).transpose(0, 3, 1, 2)
        return gx, gw

    return Tensor(out, _parents=(x, w), _backward=backward)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, mean=None, var=None,
               eps: float = 1e-5):
    """Normalise over every axis but 1; batch statistics when ``mean`` is None.

    Returns ``(out, batch_mean, batch_var)``; the batch statistics are None in
    eval mode.
    """
    axes = tuple(i for i in range(x.data.ndim) if i != 1)
    bshape = [1] * x.data.ndim
    bshape[1] = x.shape[1]
    X = x.data
    G = gamma.data.reshape(bshape)
    B = beta.data.reshape(bshape)
    if mean is None:
        mu = X.mean(axis=axes, keepdims=True)
        v = X.var(axis=axes, keepdims=True)
        inv = 1.0 / np.sqrt(v + eps)
        xhat = (X - mu) * inv
        m = X.size // x.shape[1]

        def backward(g):
            gg = (g * xhat).sum(axis=axes)
            gb = g.sum(axis=axes)
            gxhat = g * G
            gx = inv / m * (m * gxhat - gxhat.sum(axis=axes, keepdims=True)
                            - xhat * (gxhat * xhat).sum(axis=axes, keepdims=True))
            return gx, gg, gb

        out = Tensor(xhat * G + B, _parents=(x, gamma, beta), _backward=backward)
        return out, mu.reshape(-1), v.reshape(-1)
    inv = 1.0 / np.sqrt(np.asarray(var).reshape(bshape) + eps)
    xhat = (X - np.asarray(mean).reshape(bshape)) * inv

    def backward_eval(g):
        return g * G * inv, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    out = Tensor(xhat * G + B, _parents=(x, gamma, beta), _backward=backward_eval)
    return out, None, None


def avg_pool(x: Tensor, k: int) -> Tensor:
    """Non-overlapping ``k x k`` average pooling on (N, C, H, W)."""
    N, C, H, W = x.shape
    if H % k or W % k:
        raise ShapeMismatch(f"avg_pool size {k} does not divide {H}x{W}")
    out = x.data.reshape(N, C, H // k, k, W // k, k).mean(axis=(3, 5))

    def backward(g):
        return (np.repeat(np.repeat(g, k, axis=2), k, axis=3) / (k * k),)

    return Tensor(out, _parents=(x,), _backward=backward)


def global_avg_pool(x: Tensor) -> Tensor:
    N, C, H, W = x.shape
    return Tensor(x.data.mean(axis=(2, 3)), _parents=(x,),
                  _backward=lambda g: (np.broadcast_to(g[:, :, None, None], (N, C, H, W)) / (H * W),))


def softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Summed negative log-likelihood of integer ``labels`` under softmax(logits)."""
    labels = np.asarray(labels, dtype=int)
    if logits.data.ndim != 2 or len(labels) != logits.shape[0]:
        raise ShapeMismatch(f"logits {logits.shape} vs labels {labels.shape}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(len(labels))
    loss = -logp[rows, labels].sum()

    def backward(g):
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        return (g * p,)

    return Tensor(loss, _parents=(logits,), _backward=backward)

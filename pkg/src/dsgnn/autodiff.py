"""Minimal dense-array arithmetic with reverse-mode differentiation.

Arrays are float64 numpy buffers wrapped in :class:`Tensor`. Every operation
that touches a gradient-requiring tensor records a node on an implicit tape
(the ``_parents`` graph); ``Tensor.backward`` walks the graph in reverse
topological order and accumulates gradients into leaf tensors.

Gradient accumulation is explicit: call ``ParamBundle.zero_grad`` between
backward passes, nothing is cleared implicitly.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError, ShapeError


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A dense array plus an optional gradient and tape linkage."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph construction ------------------------------------------------

    @staticmethod
    def _result(data, parents, backward):
        out = Tensor(data)
        if any(p.requires_grad or p._parents for p in parents):
            out._parents = parents
            out._backward = backward
        return out

    def backward(self):
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``.

        `self` must be scalar (shape () or size 1).
        """
        if self.data.size != 1:
            raise ShapeError(
                f"backward requires a scalar loss, got shape {self.data.shape}"
            )
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad += g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not (parent.requires_grad or parent._parents):
                    continue
                if id(parent) in grads:
                    grads[id(parent)] += pg
                else:
                    grads[id(parent)] = pg

    # -- operator sugar ----------------------------------------------------

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

    def __getitem__(self, idx):
        return getitem(self, idx)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    return Tensor(np.asarray(x, dtype=np.float64))


# -- elementwise suite -----------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._result(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._result(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)),
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._result(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._result(
        a.data / b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        ),
    )


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    return Tensor._result(a.data * mask, (a,), lambda g: (g * mask,))


def sigmoid(a):
    a = as_tensor(a)
    x = a.data
    # overflow-free split formulation for large |x|
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    return Tensor._result(s, (a,), lambda g: (g * s * (1.0 - s),))


def exp(a):
    a = as_tensor(a)
    e = np.exp(a.data)
    return Tensor._result(e, (a,), lambda g: (g * e,))


def sqrt(a):
    """Square root with zero subgradient at 0 (keeps norms of zeros finite)."""
    a = as_tensor(a)
    r = np.sqrt(a.data)
    safe = np.where(r > 0, r, 1.0)
    return Tensor._result(r, (a,), lambda g: (np.where(r > 0, g * 0.5 / safe, 0.0),))


def absolute(a):
    a = as_tensor(a)
    return Tensor._result(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def softmax(a, axis=-1):
    """Numerically stable softmax along `axis`."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * s).sum(axis=axis, keepdims=True)
        return (s * (g - inner),)

    return Tensor._result(s, (a,), backward)


def reduce_sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return Tensor._result(out, (a,), backward)


def reduce_mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod(
        [a.data.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))]
    )
    return mul(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / float(count))


def reshape(a, shape):
    a = as_tensor(a)
    return Tensor._result(
        a.data.reshape(shape), (a,), lambda g: (g.reshape(a.data.shape),)
    )


def transpose(a, axes=None):
    a = as_tensor(a)
    axes_ = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    inv = np.argsort(axes_)
    return Tensor._result(
        a.data.transpose(axes_), (a,), lambda g: (g.transpose(inv),)
    )


def swap_last_two(a):
    a = as_tensor(a)
    return Tensor._result(
        a.data.swapaxes(-1, -2), (a,), lambda g: (g.swapaxes(-1, -2),)
    )


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return Tensor._result(
        np.concatenate([t.data for t in tensors], axis=axis),
        tuple(tensors),
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


def getitem(a, idx):
    a = as_tensor(a)

    def backward(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return (out,)

    return Tensor._result(a.data[idx], (a,), backward)


def matmul(a, b):
    """Matrix product; supports numpy-style stacked (batched) operands."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(
            f"matmul needs >=2-D operands, got shapes {a.shape} and {b.shape}"
        )
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(
            f"matmul inner dimensions disagree: {a.shape} vs {b.shape}"
        )
    out = np.matmul(a.data, b.data)

    def backward(g):
        ga = _unbroadcast(np.matmul(g, b.data.swapaxes(-1, -2)), a.data.shape)
        gb = _unbroadcast(np.matmul(a.data.swapaxes(-1, -2), g), b.data.shape)
        return (ga, gb)

    return Tensor._result(out, (a, b), backward)


def l2_distance(a, b):
    """Frobenius-norm distance between two equal-shaped arrays."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"l2_distance shapes disagree: {a.shape} vs {b.shape}")
    d = sub(a, b)
    return sqrt(reduce_sum(mul(d, d)))


def pad2d(a, width):
    """Zero-pad the first two axes of an (H, W, C) tensor by `width`."""
    a = as_tensor(a)
    pads = ((width, width), (width, width)) + ((0, 0),) * (a.ndim - 2)
    sl = (slice(width, a.shape[0] + width), slice(width, a.shape[1] + width))
    return Tensor._result(
        np.pad(a.data, pads), (a,), lambda g: (g[sl],)
    )


# -- structured layers -----------------------------------------------------


def conv2d_3x3(x, kernel, bias=None):
    """3x3 convolution with same zero padding.

    x: (H, W, C); kernel: (9, C, F) in row-major offset order; bias: (F,).
    Returns (H, W, F).
    """
    x = as_tensor(x)
    kernel = as_tensor(kernel)
    if x.ndim != 3 or kernel.ndim != 3 or kernel.shape[0] != 9:
        raise ShapeError(
            f"conv2d_3x3 expects x (H,W,C) and kernel (9,C,F); "
            f"got {x.shape} and {kernel.shape}"
        )
    if x.shape[2] != kernel.shape[1]:
        raise ShapeError(
            f"conv2d_3x3 channel mismatch: input {x.shape} vs kernel {kernel.shape}"
        )
    h, w, c = x.shape
    f = kernel.shape[2]
    xp = pad2d(x, 1)
    acc = None
    for di in range(3):
        for dj in range(3):
            patch = getitem(xp, (slice(di, di + h), slice(dj, dj + w)))
            flat = reshape(patch, (h * w, c))
            term = matmul(flat, getitem(kernel, di * 3 + dj))
            acc = term if acc is None else add(acc, term)
    out = reshape(acc, (h, w, f))
    if bias is not None:
        out = add(out, bias)
    return out


def conv1d_full_width(x, weight, bias):
    """Full-width 1-D convolution: a learned linear functional per vector.

    x: (..., C); weight: (C,); bias: scalar. Returns (...).
    """
    x = as_tensor(x)
    weight = as_tensor(weight)
    lead = x.shape[:-1]
    c = x.shape[-1]
    flat = reshape(x, (int(np.prod(lead)) if lead else 1, c))
    out = add(matmul(flat, reshape(weight, (c, 1))), bias)
    return reshape(out, lead)


class BatchNorm:
    """Batch normalization over all axes except the last (channel) axis.

    Train mode normalizes by batch statistics and, unless `update_stats` is
    False, folds them into running statistics (momentum 0.1). Eval mode
    normalizes by the running statistics.
    """

    def __init__(self, channels, momentum=0.1, eps=1e-5):
        self.momentum = momentum
        self.eps = eps
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def __call__(self, x, gamma, beta, training, update_stats=True):
        x = as_tensor(x)
        axes = tuple(range(x.ndim - 1))
        if training:
            mu = reduce_mean(x, axis=axes, keepdims=True)
            centered = sub(x, mu)
            var = reduce_mean(mul(centered, centered), axis=axes, keepdims=True)
            if update_stats:
                m = self.momentum
                self.running_mean = (1 - m) * self.running_mean + m * mu.data.ravel()
                self.running_var = (1 - m) * self.running_var + m * var.data.ravel()
            xhat = div(centered, sqrt(add(var, self.eps)))
        else:
            xhat = div(
                sub(x, self.running_mean),
                np.sqrt(self.running_var + self.eps),
            )
        return add(mul(xhat, gamma), beta)


# -- parameters and optimization ------------------------------------------


class ParamBundle:
    """Named collection of learnable tensors with matching gradient slots."""

    def __init__(self):
        self.entries: dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.entries:
            raise ConfigError(f"duplicate parameter name: {name}")
        t = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)
        self.entries[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def names(self):
        return list(self.entries)

    def zero_grad(self):
        for t in self.entries.values():
            t.grad[...] = 0.0

    def copy_values(self) -> dict:
        return {k: t.data.copy() for k, t in self.entries.items()}

    def load_values(self, values: dict):
        for k, v in values.items():
            self.entries[k].data[...] = v


def glorot_uniform(rng: np.random.Generator, shape, fan_in, fan_out) -> np.ndarray:
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


class Adam:
    """Adam optimizer with bias correction; moment state kept per entry."""

    def __init__(self, params: ParamBundle, lr=0.001, betas=(0.9, 0.999), eps=1e-8):
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(t.data) for k, t in params.entries.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.entries.items()}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for k, p in self.params.entries.items():
            g = p.grad
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            mhat = self.m[k] / (1 - b1**self.t)
            vhat = self.v[k] / (1 - b2**self.t)
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)

"""Dense float64 tensors with reverse-mode automatic differentiation.

A ``Tensor`` wraps a numpy array and records, per operation, a closure that
maps the upstream gradient to gradients for the operation's inputs.  Calling
``backward`` on a scalar walks the recorded graph in reverse topological
order and accumulates gradients into every reachable ``Param``.

All data is double precision.  Gradients accumulate across ``backward``
calls until ``zero_grad`` is invoked on the parameters.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    ConfigurationError,
    DegenerateSliceError,
    InputTooShortError,
    ShapeMismatchError,
)

LAYER_NORM_EPS = 1e-5


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the autodiff graph holding a float64 numpy array."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad) or any(
            p.requires_grad for p in _parents
        )
        self.grad = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(as_tensor(other), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    # -- shape ops --------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes):
        return transpose(self, axes)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis=axis, keepdims=keepdims)


class Param(Tensor):
    """A named leaf tensor with a persistent gradient accumulator."""

    __slots__ = ("name",)

    def __init__(self, value, name):
        super().__init__(value, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Param(name={self.name!r}, shape={self.shape})"


def as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def constant(x):
    """A non-differentiable tensor wrapping ``x``."""
    return Tensor(np.asarray(x, dtype=np.float64))


# ---------------------------------------------------------------------------
# backward driver
# ---------------------------------------------------------------------------


def backward(loss):
    """Populate grads of every Param reachable from the scalar ``loss``."""
    if loss.size != 1:
        raise ValueError(
            f"backward requires a scalar loss, got shape {loss.shape}"
        )
    topo = []
    visited = set()
    stack = [(loss, iter(loss._parents))]
    on_stack = {id(loss)}
    while stack:
        node, children = stack[-1]
        advanced = False
        for child in children:
            if id(child) in visited or not child.requires_grad:
                continue
            visited.add(id(child))
            stack.append((child, iter(child._parents)))
            on_stack.add(id(child))
            advanced = True
            break
        if not advanced:
            stack.pop()
            topo.append(node)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            acc = grads.get(id(parent))
            grads[id(parent)] = pg if acc is None else acc + pg


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return Tensor(out, _parents=(a, b), _backward=bwd)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def bwd(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return Tensor(out, _parents=(a, b), _backward=bwd)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def bwd(g):
        return (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        )

    return Tensor(out, _parents=(a, b), _backward=bwd)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError(
            f"matmul: incompatible shapes {a.shape} and {b.shape}"
        )
    out = np.matmul(a.data, b.data)

    def bwd(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return Tensor(out, _parents=(a, b), _backward=bwd)


def relu(x):
    x = as_tensor(x)
    out = np.maximum(x.data, 0.0)

    def bwd(g):
        return (g * (x.data > 0.0),)

    return Tensor(out, _parents=(x,), _backward=bwd)


def reshape(x, shape):
    x = as_tensor(x)
    out = x.data.reshape(shape)

    def bwd(g):
        return (g.reshape(x.data.shape),)

    return Tensor(out, _parents=(x,), _backward=bwd)


def transpose(x, axes):
    x = as_tensor(x)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = x.data.transpose(axes)

    def bwd(g):
        return (g.transpose(inv),)

    return Tensor(out, _parents=(x,), _backward=bwd)


def getitem(x, key):
    """Basic (non-fancy) slicing; use ``take`` for integer-array indexing."""
    x = as_tensor(x)
    out = x.data[key]

    def bwd(g):
        gx = np.zeros_like(x.data)
        gx[key] = g
        return (gx,)

    return Tensor(out, _parents=(x,), _backward=bwd)


def take(x, indices, axis):
    x = as_tensor(x)
    idx = np.asarray(indices, dtype=np.intp)
    out = np.take(x.data, idx, axis=axis)

    def bwd(g):
        gx = np.zeros_like(x.data)
        sl = [slice(None)] * x.ndim
        for j, i in enumerate(idx):
            sl[axis] = i
            src = [slice(None)] * x.ndim
            src[axis] = j
            gx[tuple(sl)] += g[tuple(src)]
        return (gx,)

    return Tensor(out, _parents=(x,), _backward=bwd)


def concat(tensors, axis):
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        pieces = []
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            pieces.append(g[tuple(sl)])
        return tuple(pieces)

    return Tensor(out, _parents=tuple(tensors), _backward=bwd)


def tensor_sum(x, axis=None, keepdims=False):
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, x.data.shape).copy(),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2, x.data.shape).copy(),)

    return Tensor(out, _parents=(x,), _backward=bwd)


def tensor_mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    n = x.size if axis is None else x.shape[axis]
    return mul(tensor_sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def softmax_lastdim(x):
    """Softmax over the last axis; ``-inf`` entries map to exactly 0."""
    x = as_tensor(x)
    m = np.max(x.data, axis=-1, keepdims=True)
    if np.any(np.isneginf(m)):
        raise DegenerateSliceError(
            "softmax_lastdim: a slice is entirely -inf (fully masked)"
        )
    e = np.exp(x.data - m)
    s = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return Tensor(s, _parents=(x,), _backward=bwd)


def layer_norm(x, gain, bias, eps=LAYER_NORM_EPS):
    """Normalize the last axis to mean 0 / variance 1, then apply affine."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = xhat * gain.data + bias.data

    def bwd(g):
        ggain = _unbroadcast(g * xhat, gain.data.shape)
        gbias = _unbroadcast(g, bias.data.shape)
        gh = g * gain.data
        gx = inv * (
            gh
            - gh.mean(axis=-1, keepdims=True)
            - xhat * (gh * xhat).mean(axis=-1, keepdims=True)
        )
        return gx, ggain, gbias

    return Tensor(out, _parents=(x, gain, bias), _backward=bwd)


def conv2d_same(x, kernel):
    """2D cross-correlation with zero 'same' padding; odd kernels only."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeMismatchError(
            f"conv2d_same expects 4D input and kernel, got {x.shape} and "
            f"{kernel.shape}"
        )
    c_out, c_in, r, r2 = kernel.shape
    if r != r2 or r % 2 == 0:
        raise ConfigurationError(
            f"conv2d_same requires square odd kernels, got {r}x{r2}"
        )
    if x.shape[1] != c_in:
        raise ShapeMismatchError(
            f"conv2d_same: input channels {x.shape[1]} != kernel {c_in}"
        )
    pad = (r - 1) // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (r, r), axis=(2, 3))
    out = np.einsum("bchwij,ocij->bohw", win, kernel.data, optimize=True)

    def bwd(g):
        gk = np.einsum("bchwij,bohw->ocij", win, g, optimize=True)
        gp = np.pad(g, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        gwin = sliding_window_view(gp, (r, r), axis=(2, 3))
        kflip = kernel.data[:, :, ::-1, ::-1]
        gx = np.einsum("bohwij,ocij->bchw", gwin, kflip, optimize=True)
        return gx, gk

    return Tensor(out, _parents=(x, kernel), _backward=bwd)


def rfft_magnitudes(x, axis=0):
    """Magnitudes of the non-negative bins of the unnormalized real DFT.

    Differentiable; at bins with zero magnitude the subgradient 0 is used.
    """
    x = as_tensor(x)
    t_len = x.shape[axis]
    if t_len < 2:
        raise InputTooShortError(
            f"rfft_magnitudes requires length >= 2, got {t_len}"
        )
    spec = np.fft.rfft(x.data, axis=axis)
    mag = np.abs(spec)
    n_bins = mag.shape[axis]

    def bwd(g):
        safe = np.where(mag > 0.0, mag, 1.0)
        unit = np.where(mag > 0.0, spec / safe, 0.0)
        theta = 2.0 * np.pi * np.outer(np.arange(t_len), np.arange(n_bins)) / t_len
        vr = np.moveaxis(g * unit.real, axis, -1)
        vi = np.moveaxis(g * unit.imag, axis, -1)
        gx = vr @ np.cos(theta).T - vi @ np.sin(theta).T
        return (np.moveaxis(gx, -1, axis),)

    return Tensor(mag, _parents=(x,), _backward=bwd)


def dropout(x, rate, rng, training):
    """Inverted dropout; identity when not training or rate == 0."""
    if not training or rate == 0.0:
        return as_tensor(x)
    if not 0.0 <= rate < 1.0:
        raise ConfigurationError(f"dropout rate must be in [0, 1), got {rate}")
    mask = (rng.random(as_tensor(x).shape) >= rate) / (1.0 - rate)
    return mul(x, constant(mask))

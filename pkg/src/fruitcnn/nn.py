"""Layers, activations and losses with hand-written backward passes.

Every layer implements ``forward(x, train=False, prng=None) -> (out, cache)``
and ``backward(grad_out, cache) -> (grad_in, param_grads)`` where
``param_grads`` lines up with ``layer.param_names``. A cache belongs to one
forward call and may be consumed by exactly one backward call.
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels
from .tensor import Prng, ShapeError, uniform_fill


class CacheError(RuntimeError):
    pass


class LayerCache:
    __slots__ = ("owner", "data", "used")

    def __init__(self, owner, **data):
        self.owner = owner
        self.data = data
        self.used = False

    def take(self, owner) -> dict:
        if self.owner is not owner:
            raise CacheError(f"cache was produced by {type(self.owner).__name__}, not this layer")
        if self.used:
            raise CacheError("stale cache: already consumed by a backward call")
        self.used = True
        return self.data


def same_padding(size: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """Output extent and (before, after) padding for 'same' windows.

    Output is ceil(size / stride); any odd padding goes after (bottom/right).
    """
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return out, total // 2, total - total // 2


def lecun_uniform(prng: Prng, shape, fan_in: int, width: str = "single") -> np.ndarray:
    limit = math.sqrt(3.0 / fan_in)
    return uniform_fill(prng, shape, -limit, limit, width)


class Layer:
    param_names: tuple[str, ...] = ()

    def params(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in self.param_names]

    def output_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        return in_shape


class Conv2D(Layer):
    """2-D convolution with 'same' zero padding, lowered to im2col + matmul."""

    param_names = ("weights", "bias")

    def __init__(self, weights: np.ndarray, bias: np.ndarray, stride: int = 1, padding: str = "same"):
        if weights.ndim != 4:
            raise ShapeError(f"conv weights must be [F,C,kh,kw], got {list(weights.shape)}")
        if bias.shape != (weights.shape[0],):
            raise ShapeError(f"conv bias shape {list(bias.shape)} does not match {weights.shape[0]} filters")
        if stride < 1:
            raise ValueError("stride must be positive")
        if padding != "same":
            raise ValueError("only 'same' padding is supported")
        self.weights = weights
        self.bias = bias
        self.stride = int(stride)
        self.padding = padding

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    def output_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.in_channels:
            raise ShapeError(f"conv expects {self.in_channels} input channels, got {c}")
        kh, kw = self.weights.shape[2:]
        return (self.out_channels, same_padding(h, kh, self.stride)[0], same_padding(w, kw, self.stride)[0])

    def _geometry(self, x):
        if x.ndim != 4:
            raise ShapeError(f"conv input must be [N,C,H,W], got {list(x.shape)}")
        if x.shape[1] != self.in_channels:
            raise ShapeError(f"conv expects {self.in_channels} input channels, got {x.shape[1]}")
        kh, kw = self.weights.shape[2:]
        ho, top, bottom = same_padding(x.shape[2], kh, self.stride)
        wo, left, right = same_padding(x.shape[3], kw, self.stride)
        return kh, kw, ho, wo, (top, bottom), (left, right)

    def forward(self, x, train=False, prng=None):
        kh, kw, ho, wo, pad_h, pad_w = self._geometry(x)
        n = x.shape[0]
        xp = np.pad(x, ((0, 0), (0, 0), pad_h, pad_w))
        cols = _kernels.im2col(xp, kh, kw, self.stride, ho, wo)
        w2 = self.weights.reshape(self.out_channels, -1)
        out = cols @ w2.T + self.bias
        out = np.ascontiguousarray(out.reshape(n, ho, wo, self.out_channels).transpose(0, 3, 1, 2))
        return out, LayerCache(self, cols=cols, x_shape=x.shape, xp_shape=xp.shape,
                               pad_h=pad_h, pad_w=pad_w, out_shape=out.shape)

    def backward(self, grad_out, cache):
        d = cache.take(self)
        if grad_out.shape != d["out_shape"]:
            raise ShapeError(f"conv grad shape {list(grad_out.shape)} != output shape {list(d['out_shape'])}")
        n, f, ho, wo = grad_out.shape
        kh, kw = self.weights.shape[2:]
        g2 = grad_out.transpose(0, 2, 3, 1).reshape(-1, f)
        grad_w = (g2.T @ d["cols"]).reshape(self.weights.shape)
        grad_b = grad_out.sum(axis=(0, 2, 3))
        gcols = g2 @ self.weights.reshape(f, -1)
        _, c, hp, wp = d["xp_shape"]
        gxp = _kernels.col2im(gcols, n, c, hp, wp, kh, kw, self.stride, ho, wo)
        h, w = d["x_shape"][2:]
        top, left = d["pad_h"][0], d["pad_w"][0]
        grad_in = np.ascontiguousarray(gxp[:, :, top : top + h, left : left + w])
        return grad_in, (grad_w, grad_b)


def conv2d_naive(x: np.ndarray, weights: np.ndarray, bias: np.ndarray, stride: int = 1) -> np.ndarray:
    """Direct loop-nest convolution with 'same' padding (reference path)."""
    n, c, h, w = x.shape
    f, c2, kh, kw = weights.shape
    if c != c2:
        raise ShapeError(f"conv expects {c2} input channels, got {c}")
    ho, top, bottom = same_padding(h, kh, stride)
    wo, left, right = same_padding(w, kw, stride)
    xp = np.pad(x, ((0, 0), (0, 0), (top, bottom), (left, right)))
    out = np.empty((n, f, ho, wo), dtype=np.result_type(x, weights))
    for b in range(n):
        for k in range(f):
            for i in range(ho):
                for j in range(wo):
                    acc = bias[k]
                    for ch in range(c):
                        for u in range(kh):
                            for v in range(kw):
                                acc += weights[k, ch, u, v] * xp[b, ch, i * stride + u, j * stride + v]
                    out[b, k, i, j] = acc
    return out


class MaxPool2D(Layer):
    """Max pooling with 'same' (-inf) padding; ties go to the first row-major slot."""

    def __init__(self, pool=(2, 2), stride: int = 2, padding: str = "same"):
        if padding != "same":
            raise ValueError("only 'same' padding is supported")
        if stride < 1 or min(pool) < 1:
            raise ValueError("pool size and stride must be positive")
        self.pool = (int(pool[0]), int(pool[1]))
        self.stride = int(stride)
        self.padding = padding

    def output_shape(self, in_shape):
        c, h, w = in_shape
        ph, pw = self.pool
        return (c, same_padding(h, ph, self.stride)[0], same_padding(w, pw, self.stride)[0])

    def forward(self, x, train=False, prng=None):
        if x.ndim != 4:
            raise ShapeError(f"pool input must be [N,C,H,W], got {list(x.shape)}")
        ph, pw = self.pool
        ho, top, _ = same_padding(x.shape[2], ph, self.stride)
        wo, left, _ = same_padding(x.shape[3], pw, self.stride)
        out, arg = _kernels.maxpool_forward(x, ph, pw, self.stride, ho, wo, top, left)
        return out, LayerCache(self, argmax=arg, x_shape=x.shape, out_shape=out.shape)

    def backward(self, grad_out, cache):
        if cache is None:
            raise CacheError("missing pooling cache")
        d = cache.take(self)
        if grad_out.shape != d["out_shape"]:
            raise ShapeError(f"pool grad shape {list(grad_out.shape)} != output shape {list(d['out_shape'])}")
        size = int(np.prod(d["x_shape"]))
        flat = _kernels.maxpool_backward(grad_out, d["argmax"], size)
        return flat.reshape(d["x_shape"]), ()


class Dense(Layer):
    """Affine map ``y = x W^T + b`` with W stored as [out, in]."""

    param_names = ("weights", "bias")

    def __init__(self, weights: np.ndarray, bias: np.ndarray):
        if weights.ndim != 2 or bias.shape != (weights.shape[0],):
            raise ShapeError(f"dense weights {list(weights.shape)} / bias {list(bias.shape)} inconsistent")
        self.weights = weights
        self.bias = bias

    def output_shape(self, in_shape):
        if in_shape != (self.weights.shape[1],):
            raise ShapeError(f"dense expects input width {self.weights.shape[1]}, got {list(in_shape)}")
        return (self.weights.shape[0],)

    def forward(self, x, train=False, prng=None):
        if x.ndim != 2 or x.shape[1] != self.weights.shape[1]:
            raise ShapeError(f"dense expects [N,{self.weights.shape[1]}], got {list(x.shape)}")
        out = x @ self.weights.T + self.bias
        return out, LayerCache(self, x=x)

    def backward(self, grad_out, cache):
        x = cache.take(self)["x"]
        if grad_out.shape != (x.shape[0], self.weights.shape[0]):
            raise ShapeError(f"dense grad shape {list(grad_out.shape)} does not match output")
        grad_w = grad_out.T @ x
        grad_b = grad_out.sum(axis=0)
        grad_in = grad_out @ self.weights
        return grad_in, (grad_w, grad_b)


class ReLU(Layer):
    def forward(self, x, train=False, prng=None):
        mask = x > 0
        return np.where(mask, x, x.dtype.type(0)), LayerCache(self, mask=mask)

    def backward(self, grad_out, cache):
        return relu_backward(grad_out, cache.take(self)["mask"]), ()


class Dropout(Layer):
    """Inverted dropout: survivors are scaled by 1/(1-p) during training."""

    def __init__(self, p: float):
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout probability must be in [0, 1), got {p}")
        self.p = float(p)

    def forward(self, x, train=False, prng=None):
        if not train or self.p == 0.0:
            return x, LayerCache(self, mask=None)
        if prng is None:
            raise ValueError("training-mode dropout needs a Prng")
        keep = prng.random(x.shape) >= self.p
        mask = keep.astype(x.dtype) * x.dtype.type(1.0 / (1.0 - self.p))
        return x * mask, LayerCache(self, mask=mask)

    def backward(self, grad_out, cache):
        mask = cache.take(self)["mask"]
        return (grad_out if mask is None else grad_out * mask), ()


class Flatten(Layer):
    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, train=False, prng=None):
        return x.reshape(x.shape[0], -1), LayerCache(self, shape=x.shape)

    def backward(self, grad_out, cache):
        return grad_out.reshape(cache.take(self)["shape"]), ()


# functional spellings of the layer passes

def conv2d_forward(layer: Conv2D, x):
    return layer.forward(x)


def conv2d_backward(layer: Conv2D, grad_out, cache):
    grad_in, (gw, gb) = layer.backward(grad_out, cache)
    return grad_in, gw, gb


def maxpool_forward(layer: MaxPool2D, x):
    return layer.forward(x)


def maxpool_backward(layer: MaxPool2D, grad_out, cache):
    return layer.backward(grad_out, cache)[0]


def dense_forward(layer: Dense, x):
    return layer.forward(x)


def dense_backward(layer: Dense, grad_out, cache):
    grad_in, (gw, gb) = layer.backward(grad_out, cache)
    return grad_in, gw, gb


def dropout_forward(layer: Dropout, x, prng: Prng | None = None, train: bool = True):
    return layer.forward(x, train=train, prng=prng)


def dropout_backward(layer: Dropout, grad_out, cache):
    return layer.backward(grad_out, cache)[0]


def flatten(x):
    return x.reshape(x.shape[0], -1)


def unflatten(x, shape):
    return x.reshape(shape)


# ---------------------------------------------------------------- activations

def relu(x):
    return np.maximum(x, x.dtype.type(0))


def relu_backward(grad_out, mask_or_x):
    mask = mask_or_x if mask_or_x.dtype == bool else mask_or_x > 0
    return np.where(mask, grad_out, grad_out.dtype.type(0))


def sigmoid(z):
    z = np.asarray(z, dtype=np.result_type(z, np.float32))
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def softmax(z):
    z = np.asarray(z)
    if z.ndim != 2 or z.shape[1] < 1:
        raise ShapeError(f"softmax expects [N,k], got {list(z.shape)}")
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------- losses

def _check_one_hot(t):
    if t.ndim != 2:
        raise ShapeError(f"targets must be [N,k], got {list(t.shape)}")
    if not (np.all((t == 0) | (t == 1)) and np.all(t.sum(axis=1) == 1)):
        raise ValueError("targets are not one-hot rows")


def xent_unchecked(p, t) -> float:
    """Mean of -sum(t * log p) with log clamped at 1e-12; no target validation."""
    logp = np.log(np.clip(p, 1e-12, 1.0))
    return float(-(t * logp).sum() / p.shape[0])


def cross_entropy(p, t) -> float:
    if p.shape != t.shape:
        raise ShapeError(f"prediction shape {list(p.shape)} != target shape {list(t.shape)}")
    _check_one_hot(t)
    if not np.allclose(p.sum(axis=1), 1.0, rtol=0, atol=1e-6):
        raise ValueError("prediction rows do not sum to 1")
    return xent_unchecked(p, t)


def softmax_xent_grad(z, t):
    """Gradient of mean cross-entropy w.r.t. logits: (softmax(z) - t) / N.

    Written as ``softmax(z) * sum(t) - t`` so it stays exact for rows that
    are not one-hot (e.g. all-zero targets in degenerate checks).
    """
    if z.shape != t.shape:
        raise ShapeError(f"logit shape {list(z.shape)} != target shape {list(t.shape)}")
    return (softmax(z) * t.sum(axis=1, keepdims=True) - t) / z.shape[0]


def quadratic_cost(y, a) -> float:
    y = np.asarray(y)
    a = np.asarray(a)
    if y.shape != a.shape:
        raise ShapeError(f"shape mismatch: {list(y.shape)} vs {list(a.shape)}")
    d = y - a
    return float((d * d).sum() / (2 * y.shape[0]))

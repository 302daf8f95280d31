"""Layers with hand-written backward passes.

Activations inside the network are NHWC so that im2col patches and batch-norm
reductions stay contiguous; weights keep the conventional (C_out, C_in, k, k)
layout. Every layer exposes ``params``/``grads`` dicts keyed by short names.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import InvalidLabel, ShapeMismatch, StateError, UninitializedStats


def conv_out_size(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def im2col(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    """(N, H, W, C) -> (N*Ho*Wo, k*k*C) patch matrix, columns ordered (u, v, c)."""
    n, h, w, c = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    ho, wo = conv_out_size(h, k, stride, pad), conv_out_size(w, k, stride, pad)
    if k == 1:
        return np.ascontiguousarray(x[:, ::stride, ::stride, :][:, :ho, :wo]).reshape(-1, c)
    win = sliding_window_view(x, (k, k), axis=(1, 2))[:, ::stride, ::stride][:, :ho, :wo]
    # (N, Ho, Wo, C, k, k) -> (N, Ho, Wo, k, k, C)
    return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(n * ho * wo, k * k * c)


def col2im(cols: np.ndarray, shape, k: int, stride: int, pad: int) -> np.ndarray:
    n, h, w, c = shape
    ho, wo = conv_out_size(h, k, stride, pad), conv_out_size(w, k, stride, pad)
    cols = cols.reshape(n, ho, wo, k, k, c)
    xp = np.zeros((n, h + 2 * pad, w + 2 * pad, c), dtype=cols.dtype)
    for u in range(k):
        for v in range(k):
            xp[:, u:u + stride * ho:stride, v:v + stride * wo:stride, :] += cols[:, :, :, u, v, :]
    return xp[:, pad:pad + h, pad:pad + w, :]


class Conv2d:
    """Bias-free 2-D convolution (bias is absorbed by the following batch norm)."""

    def __init__(self, c_in: int, c_out: int, k: int = 3, stride: int = 1, pad: int | None = None,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        if k not in (1, 3):
            raise ValueError("kernel size must be 1 or 3")
        self.k, self.stride = k, stride
        self.pad = (k // 2) if pad is None else pad
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = c_in * k * k
        w = rng.normal(0.0, math.sqrt(2.0 / fan_in), (c_out, c_in, k, k))
        self.params = {"weight": w.astype(dtype)}
        self.grads = {"weight": np.zeros_like(self.params["weight"])}
        self._cache = None

    @property
    def weight(self) -> np.ndarray:
        return self.params["weight"]

    def _wmat(self) -> np.ndarray:
        # (C_out, C_in, k, k) -> (k*k*C_in, C_out), rows ordered (u, v, c) like im2col
        w = self.weight
        return w.transpose(2, 3, 1, 0).reshape(-1, w.shape[0])

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        n, h, w, c = x.shape
        if c != self.weight.shape[1]:
            raise ShapeMismatch(f"conv expects {self.weight.shape[1]} channels, got {c}")
        if h + 2 * self.pad < self.k or w + 2 * self.pad < self.k:
            raise ShapeMismatch(f"input {h}x{w} smaller than kernel")
        cols = im2col(x, self.k, self.stride, self.pad)
        ho = conv_out_size(h, self.k, self.stride, self.pad)
        wo = conv_out_size(w, self.k, self.stride, self.pad)
        y = (cols @ self._wmat()).reshape(n, ho, wo, -1)
        self._cache = (cols, x.shape) if train else None
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise StateError("conv backward called without a training forward pass")
        cols, shape = self._cache
        dy2 = dy.reshape(-1, dy.shape[-1])
        c_out, c_in, k, _ = self.weight.shape
        dwmat = cols.T @ dy2
        self.grads["weight"] += dwmat.reshape(k, k, c_in, c_out).transpose(3, 2, 0, 1)
        self._cache = None
        if self.k == 3 and self.stride == 1 and self.pad == 1:
            # transposed conv == conv of the output gradient with the flipped kernel
            wflip = self.weight[:, :, ::-1, ::-1].transpose(2, 3, 0, 1).reshape(-1, c_in)
            return (im2col(dy, 3, 1, 1) @ wflip).reshape(shape)
        dcols = dy2 @ self._wmat().T
        if self.k == 1:
            dx = np.zeros(shape, dtype=dy.dtype)
            dx[:, ::self.stride, ::self.stride, :] = dcols.reshape(dy.shape[:3] + (c_in,))
            return dx
        return col2im(dcols, shape, self.k, self.stride, self.pad)


def conv2d_forward(x: np.ndarray, weight: np.ndarray, stride: int = 1, pad: int = 1) -> np.ndarray:
    """NCHW convolution with out-of-bounds samples taken as zero."""
    x = np.asarray(x)
    weight = np.asarray(weight)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeMismatch(f"input {x.shape} incompatible with weights {weight.shape}")
    if weight.shape[2] != weight.shape[3]:
        raise ShapeMismatch("kernels must be square")
    k = weight.shape[2]
    h, w = x.shape[2:]
    if h + 2 * pad < k or w + 2 * pad < k:
        raise ShapeMismatch(f"input {h}x{w} smaller than kernel")
    nhwc = np.ascontiguousarray(x.transpose(0, 2, 3, 1))
    cols = im2col(nhwc, k, stride, pad)
    wmat = weight.transpose(2, 3, 1, 0).reshape(-1, weight.shape[0])
    ho, wo = conv_out_size(h, k, stride, pad), conv_out_size(w, k, stride, pad)
    return (cols @ wmat).reshape(x.shape[0], ho, wo, -1).transpose(0, 3, 1, 2)


class BatchNorm2d:
    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1, dtype=np.float32):
        self.eps, self.momentum = eps, momentum
        self.params = {"gamma": np.ones(channels, dtype), "beta": np.zeros(channels, dtype)}
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.buffers = {
            "running_mean": np.zeros(channels, dtype),
            "running_var": np.ones(channels, dtype),
            "batches_tracked": np.zeros(1, dtype),
        }
        self._cache = None

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        gamma, beta = self.params["gamma"], self.params["beta"]
        if x.shape[-1] != gamma.shape[0]:
            raise ShapeMismatch(f"batch norm expects {gamma.shape[0]} channels, got {x.shape[-1]}")
        if train:
            m = x.size // x.shape[-1]
            if m < 2:
                raise ShapeMismatch("batch norm needs more than one value per channel")
            mean = x.mean(axis=(0, 1, 2))
            xc = x - mean
            var = (xc * xc).mean(axis=(0, 1, 2))
            inv = 1.0 / np.sqrt(var + self.eps)
            xhat = xc * inv
            mom = self.momentum
            rm, rv = self.buffers["running_mean"], self.buffers["running_var"]
            rm *= 1 - mom
            rm += mom * mean
            rv *= 1 - mom
            rv += mom * var * (m / (m - 1))
            self.buffers["batches_tracked"] += 1
            self._cache = (xhat, inv)
            return xhat * gamma + beta
        if self.buffers["batches_tracked"][0] == 0:
            raise UninitializedStats("batch norm has no running statistics yet")
        inv = 1.0 / np.sqrt(self.buffers["running_var"] + self.eps)
        scale = gamma * inv
        return x * scale + (beta - self.buffers["running_mean"] * scale)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise StateError("batch norm backward called without a training forward pass")
        xhat, inv = self._cache
        self._cache = None
        m = dy.size // dy.shape[-1]
        dbeta = dy.sum(axis=(0, 1, 2))
        dgamma = (dy * xhat).sum(axis=(0, 1, 2))
        self.grads["gamma"] += dgamma
        self.grads["beta"] += dbeta
        return (self.params["gamma"] * inv / m) * (m * dy - dbeta - xhat * dgamma)


class ReLU:
    params: dict = {}
    grads: dict = {}

    def __init__(self):
        self._mask = None

    def forward(self, x, train: bool = True):
        mask = x > 0
        if train:
            self._mask = mask
        return x * mask

    def backward(self, dy):
        if self._mask is None:
            raise StateError("relu backward called without a training forward pass")
        out = dy * self._mask
        self._mask = None
        return out


class Linear:
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator | None = None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        bound = 1.0 / math.sqrt(d_in)
        self.params = {
            "weight": rng.uniform(-bound, bound, (d_out, d_in)).astype(dtype),
            "bias": np.zeros(d_out, dtype),
        }
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._x = None

    def forward(self, x, train: bool = True):
        if x.shape[-1] != self.params["weight"].shape[1]:
            raise ShapeMismatch(f"linear expects {self.params['weight'].shape[1]} features")
        if train:
            self._x = x
        return x @ self.params["weight"].T + self.params["bias"]

    def backward(self, dy):
        if self._x is None:
            raise StateError("linear backward called without a training forward pass")
        self.grads["weight"] += dy.T @ self._x
        self.grads["bias"] += dy.sum(axis=0)
        dx = dy @ self.params["weight"]
        self._x = None
        return dx


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient (softmax - onehot) / N."""
    logits = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise InvalidLabel(f"expected {n} labels, got shape {labels.shape}")
    if n == 0 or labels.min() < 0 or labels.max() >= k:
        raise InvalidLabel(f"labels must lie in [0, {k})")
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(logsum - z[np.arange(n), labels]))
    p = np.exp(z - logsum[:, None])
    p[np.arange(n), labels] -= 1.0
    return loss, p / n

"""Residual classifier: conv stem, stages of two-conv residual blocks, pooled linear head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch, StateError, UninitializedStats
from .layers import BatchNorm2d, Conv2d, Linear, ReLU, softmax, softmax_cross_entropy


@dataclass(frozen=True)
class Architecture:
    in_channels: int = 9
    num_classes: int = 6
    widths: tuple[int, ...] = (16, 32, 64, 128)
    blocks_per_stage: int = 2

    @property
    def weighted_layers(self) -> int:
        """Stem conv + two convs per block + the linear head (projections not counted)."""
        return 1 + 2 * self.blocks_per_stage * len(self.widths) + 1


DEFAULT_ARCH = Architecture()
# reduced network for finite-difference checks: two blocks, the second downsampling
TINY_ARCH = Architecture(widths=(4, 6), blocks_per_stage=1)


class ResidualBlock:
    def __init__(self, c_in: int, c_out: int, stride: int, rng, dtype):
        self.conv1 = Conv2d(c_in, c_out, 3, stride, rng=rng, dtype=dtype)
        self.bn1 = BatchNorm2d(c_out, dtype=dtype)
        self.relu1 = ReLU()
        self.conv2 = Conv2d(c_out, c_out, 3, 1, rng=rng, dtype=dtype)
        self.bn2 = BatchNorm2d(c_out, dtype=dtype)
        self.relu2 = ReLU()
        if stride != 1 or c_in != c_out:
            self.proj = Conv2d(c_in, c_out, 1, stride, pad=0, rng=rng, dtype=dtype)
            self.proj_bn = BatchNorm2d(c_out, dtype=dtype)
        else:
            self.proj = self.proj_bn = None

    def named_layers(self):
        yield "conv1", self.conv1
        yield "bn1", self.bn1
        yield "conv2", self.conv2
        yield "bn2", self.bn2
        if self.proj is not None:
            yield "proj", self.proj
            yield "proj_bn", self.proj_bn

    def forward(self, x, train):
        h = self.relu1.forward(self.bn1.forward(self.conv1.forward(x, train), train), train)
        h = self.bn2.forward(self.conv2.forward(h, train), train)
        s = x if self.proj is None else self.proj_bn.forward(self.proj.forward(x, train), train)
        return self.relu2.forward(h + s, train)

    def backward(self, dy):
        dy = self.relu2.backward(dy)
        dh = self.conv1.backward(self.bn1.backward(self.relu1.backward(
            self.conv2.backward(self.bn2.backward(dy)))))
        ds = dy if self.proj is None else self.proj.backward(self.proj_bn.backward(dy))
        return dh + ds


class Network:
    """18 weighted layers by default: stem, 4 stages x 2 blocks x 2 convs, linear head.

    Public inputs are NCHW; ``norm_mean``/``norm_std`` hold per-band input
    normalisation and are applied by :meth:`prepare`.
    """

    def __init__(self, arch: Architecture = DEFAULT_ARCH, seed: int = 0, dtype=np.float32):
        self.arch = arch
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        w0 = arch.widths[0]
        self.stem = Conv2d(arch.in_channels, w0, 3, 1, rng=rng, dtype=dtype)
        self.stem_bn = BatchNorm2d(w0, dtype=dtype)
        self.stem_relu = ReLU()
        self.blocks: list[ResidualBlock] = []
        c_in = w0
        for s, width in enumerate(arch.widths):
            for b in range(arch.blocks_per_stage):
                stride = 2 if (s > 0 and b == 0) else 1
                self.blocks.append(ResidualBlock(c_in, width, stride, rng, dtype))
                c_in = width
        self.fc = Linear(c_in, arch.num_classes, rng=rng, dtype=dtype)
        self.norm_mean: np.ndarray | None = None
        self.norm_std: np.ndarray | None = None
        self._pool_shape = None

    # --- parameter access ---------------------------------------------------

    def named_layers(self):
        yield "stem", self.stem
        yield "stem_bn", self.stem_bn
        for i, blk in enumerate(self.blocks):
            for name, layer in blk.named_layers():
                yield f"block{i}.{name}", layer
        yield "fc", self.fc

    def named_parameters(self):
        """(name, array) in declaration order; arrays are the live parameters."""
        for lname, layer in self.named_layers():
            for key, arr in layer.params.items():
                yield f"{lname}.{key}", arr

    def named_grads(self):
        for lname, layer in self.named_layers():
            for key, arr in layer.grads.items():
                yield f"{lname}.{key}", arr

    def named_buffers(self):
        for lname, layer in self.named_layers():
            for key, arr in getattr(layer, "buffers", {}).items():
                yield f"{lname}.{key}", arr

    def parameters(self) -> dict[str, np.ndarray]:
        return dict(self.named_parameters())

    def grads(self) -> dict[str, np.ndarray]:
        return dict(self.named_grads())

    def zero_grad(self):
        for _, g in self.named_grads():
            g[...] = 0

    def count_weighted_layers(self) -> int:
        """Convs on the main path plus linear layers, counted from the built structure."""
        n = 1 + 1  # stem + fc
        for blk in self.blocks:
            n += sum(1 for name, layer in blk.named_layers()
                     if isinstance(layer, Conv2d) and not name.startswith("proj"))
        return n

    # --- compute ------------------------------------------------------------

    def prepare(self, x) -> np.ndarray:
        """Normalise a raw NCHW batch with the stored per-band statistics."""
        if self.norm_mean is None or self.norm_std is None:
            raise UninitializedStats("network has no input normalisation statistics")
        x = np.asarray(x, dtype=self.dtype)
        return (x - self.norm_mean[None, :, None, None]) / self.norm_std[None, :, None, None]

    def forward(self, x, train: bool = True) -> np.ndarray:
        """Logits (N, num_classes) for an already-normalised NCHW batch."""
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 4 or x.shape[1] != self.arch.in_channels:
            raise ShapeMismatch(f"expected (N, {self.arch.in_channels}, H, W), got {x.shape}")
        h = np.ascontiguousarray(x.transpose(0, 2, 3, 1))
        h = self.stem_relu.forward(self.stem_bn.forward(self.stem.forward(h, train), train), train)
        for blk in self.blocks:
            h = blk.forward(h, train)
        self._pool_shape = h.shape if train else None
        return self.fc.forward(h.mean(axis=(1, 2)), train)

    def backward(self, dlogits: np.ndarray) -> None:
        """Accumulate parameter gradients for the cached training forward pass."""
        if self._pool_shape is None:
            raise StateError("backward called without a training forward pass")
        n, hh, ww, c = self._pool_shape
        self._pool_shape = None
        dpool = self.fc.backward(np.asarray(dlogits, dtype=self.dtype))
        dh = np.broadcast_to((dpool / (hh * ww))[:, None, None, :], (n, hh, ww, c))
        dh = np.ascontiguousarray(dh)
        for blk in reversed(self.blocks):
            dh = blk.backward(dh)
        self.stem.backward(self.stem_bn.backward(self.stem_relu.backward(dh)))

    def predict_proba(self, x_raw, batch_size: int = 64) -> np.ndarray:
        """Eval-mode class probabilities for a raw (unnormalised) NCHW batch."""
        x_raw = np.asarray(x_raw)
        out = []
        for i in range(0, len(x_raw), batch_size):
            out.append(softmax(self.forward(self.prepare(x_raw[i:i + batch_size]), train=False)))
        if not out:
            return np.zeros((0, self.arch.num_classes), dtype=self.dtype)
        return np.concatenate(out)


def network_forward(net: Network, x, train: bool = False) -> np.ndarray:
    return net.forward(x, train=train)


def network_backward(net: Network, x, labels) -> tuple[float, dict[str, np.ndarray]]:
    """Training forward + cross-entropy + backward; returns (loss, gradients by name)."""
    net.zero_grad()
    logits = net.forward(x, train=True)
    loss, dlogits = softmax_cross_entropy(logits, labels)
    net.backward(dlogits)
    return loss, {k: g.copy() for k, g in net.named_grads()}


def predict(net: Network, crops) -> tuple[np.ndarray, np.ndarray]:
    """Class ids (argmax, lowest index on ties) and probability rows for raw crops."""
    crops = np.asarray(crops)
    if crops.ndim == 3:
        crops = crops[None]
    proba = net.predict_proba(crops)
    return np.argmax(proba, axis=1), proba

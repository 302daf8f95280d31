"""SGD with momentum and the seeded mini-batch training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ..errors import DivergenceDetected, EmptyDataset, ShapeMismatch
from .layers import softmax_cross_entropy
from .network import Network

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 12
    batch_size: int = 32
    lr: float = 0.05
    schedule: str = "cosine"  # "cosine" | "step" | "constant"
    step_every: int = 10
    step_gamma: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    seed: int = 0
    augment_flips: bool = False
    augment_rot90: bool = False

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 for batch norm")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.schedule not in ("cosine", "step", "constant"):
            raise ValueError(f"unknown schedule {self.schedule!r}")

    def lr_at(self, epoch: int) -> float:
        if self.schedule == "cosine":
            return 0.5 * self.lr * (1 + math.cos(math.pi * epoch / max(self.epochs, 1)))
        if self.schedule == "step":
            return self.lr * self.step_gamma ** (epoch // self.step_every)
        return self.lr


def no_decay(name: str) -> bool:
    """Batch-norm scale and shift are exempt from weight decay."""
    return name.endswith(".gamma") or name.endswith(".beta")


def sgd_step(params: dict, grads: dict, velocity: dict, lr: float, momentum: float,
             weight_decay: float, exempt=no_decay) -> dict:
    """In-place update: v <- m*v + g + wd*p ; p <- p - lr*v (wd skipped where ``exempt``)."""
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"{name}: grad {g.shape} vs param {p.shape}")
        step = g + weight_decay * p if weight_decay and not exempt(name) else g.copy()
        v = velocity.get(name)
        if v is None:
            v = velocity[name] = np.zeros_like(p)
        v *= momentum
        v += step
        p -= lr * v
    return params


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    accuracy: float
    lr: float


def normalization_stats(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-band mean and std over (N, H, W) of an NCHW array, in float64."""
    x64 = x.astype(np.float64)
    mean = x64.mean(axis=(0, 2, 3))
    std = x64.std(axis=(0, 2, 3))
    return mean, np.where(std > 1e-8, std, 1.0)


def _augment(xb: np.ndarray, rng: np.random.Generator, cfg: TrainConfig) -> np.ndarray:
    out = xb.copy()
    for i in range(len(out)):
        if cfg.augment_flips and rng.random() < 0.5:
            out[i] = out[i, :, :, ::-1]
        if cfg.augment_rot90:
            out[i] = np.rot90(out[i], int(rng.integers(4)), axes=(1, 2))
    return out


def train(net: Network, x: np.ndarray, y: np.ndarray, cfg: TrainConfig = TrainConfig(),
          progress=None) -> list[EpochRecord]:
    """Fit ``net`` on raw crops ``x`` (N, 9, S, S) with labels ``y``.

    Normalisation statistics come from ``x`` only and are stored on the network.
    Shuffling uses a generator seeded by ``cfg.seed``; a trailing batch smaller
    than two samples is dropped.
    """
    x = np.asarray(x)
    y = np.asarray(y, dtype=np.int64)
    if len(x) == 0:
        raise EmptyDataset("no training samples")
    if len(x) != len(y):
        raise ShapeMismatch(f"{len(x)} samples but {len(y)} labels")
    mean, std = normalization_stats(x)
    net.norm_mean = mean.astype(net.dtype)
    net.norm_std = std.astype(net.dtype)
    xn = net.prepare(x)
    rng = np.random.default_rng([int(cfg.seed), 1])
    params = net.parameters()
    grads = net.grads()
    velocity: dict[str, np.ndarray] = {}
    history = []
    n = len(xn)
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = rng.permutation(n)
        tot_loss = 0.0
        correct = seen = 0
        for start in range(0, n, cfg.batch_size):
            idx = np.sort(order[start:start + cfg.batch_size])
            if len(idx) < 2:
                continue
            xb = xn[idx]
            if cfg.augment_flips or cfg.augment_rot90:
                xb = _augment(xb, rng, cfg)
            net.zero_grad()
            logits = net.forward(xb, train=True)
            loss, dlogits = softmax_cross_entropy(logits, y[idx])
            if not math.isfinite(loss):
                raise DivergenceDetected(f"non-finite loss at epoch {epoch}, batch starting {start}")
            net.backward(dlogits)
            sgd_step(params, grads, velocity, lr, cfg.momentum, cfg.weight_decay)
            tot_loss += loss * len(idx)
            correct += int((logits.argmax(axis=1) == y[idx]).sum())
            seen += len(idx)
        rec = EpochRecord(epoch + 1, tot_loss / max(seen, 1), correct / max(seen, 1), lr)
        history.append(rec)
        log.info("epoch %d loss %.4f acc %.4f lr %.4g", rec.epoch, rec.loss, rec.accuracy, lr)
        if progress is not None:
            progress(rec)
    return history


def format_history(history) -> str:
    lines = ["# epoch\tloss\taccuracy\tlr"]
    lines += [f"{r.epoch}\t{r.loss:.6f}\t{r.accuracy:.6f}\t{r.lr:.6g}" for r in history]
    return "\n".join(lines) + "\n"

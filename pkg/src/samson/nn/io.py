"""SAMSMODL model artifact.

Layout (little-endian)::

    magic "SAMSMODL" | version u16
    in_channels u16 | num_classes u16 | blocks_per_stage u16 | n_stages u16 | widths u16 * n_stages
    norm mean f32 * in_channels | norm std f32 * in_channels
    every parameter in declaration order, then every batch-norm buffer, as raw f32
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import IoFailure, MalformedFile, UninitializedStats
from .network import Architecture, Network

MAGIC = b"SAMSMODL"
VERSION = 1
_HEAD = struct.Struct("<8sHHHHH")


def encode_model(net: Network) -> bytes:
    if net.norm_mean is None or net.norm_std is None:
        raise UninitializedStats("cannot save a model without normalisation statistics")
    a = net.arch
    parts = [_HEAD.pack(MAGIC, VERSION, a.in_channels, a.num_classes, a.blocks_per_stage, len(a.widths))]
    parts.append(struct.pack(f"<{len(a.widths)}H", *a.widths))
    tensors = [net.norm_mean, net.norm_std]
    tensors += [p for _, p in net.named_parameters()] + [b for _, b in net.named_buffers()]
    parts += [np.ascontiguousarray(t, dtype="<f4").tobytes() for t in tensors]
    return b"".join(parts)


def decode_model(buf: bytes) -> Network:
    if len(buf) < _HEAD.size:
        raise MalformedFile("truncated model header")
    magic, version, c_in, n_cls, bps, n_st = _HEAD.unpack_from(buf, 0)
    if magic != MAGIC:
        raise MalformedFile(f"bad model magic {magic!r}")
    if version != VERSION:
        raise MalformedFile(f"unsupported model version {version}")
    off = _HEAD.size
    if len(buf) < off + 2 * n_st:
        raise MalformedFile("truncated architecture descriptor")
    widths = struct.unpack_from(f"<{n_st}H", buf, off)
    off += 2 * n_st
    net = Network(Architecture(c_in, n_cls, tuple(widths), bps), seed=0, dtype=np.float32)

    def take(shape):
        nonlocal off
        n = int(np.prod(shape))
        if len(buf) < off + 4 * n:
            raise MalformedFile("truncated model payload")
        arr = np.frombuffer(buf, dtype="<f4", count=n, offset=off).reshape(shape)
        off += 4 * n
        return arr.astype(np.float32)

    net.norm_mean = take((c_in,))
    net.norm_std = take((c_in,))
    for _, arr in list(net.named_parameters()) + list(net.named_buffers()):
        arr[...] = take(arr.shape)
    if off != len(buf):
        raise MalformedFile(f"{len(buf) - off} trailing bytes in model file")
    return net


def save_model(net: Network, path) -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(encode_model(net))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_model(path) -> Network:
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return decode_model(buf)

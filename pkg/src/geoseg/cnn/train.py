"""Minibatch SGD for the patch network, plus weight checkpoints."""

from __future__ import annotations

import logging
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import FormatError, TrainingError
from .network import Network, cross_entropy

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"GSEGCNN\x00"
CHECKPOINT_VERSION = 1


@dataclass
class TrainResult:
    network: Network
    losses: list = field(default_factory=list)
    accuracies: list = field(default_factory=list)


def _as_arrays(patches, dtype):
    """Uniform (batch getter, labels) access for PatchSet or a list of Patch."""
    if hasattr(patches, "batch"):
        return (lambda idx: patches.batch(idx, dtype)), np.asarray(patches.labels)
    pixels = np.stack([np.asarray(p.pixels).transpose(2, 0, 1) for p in patches]).astype(dtype)
    labels = np.array([p.label for p in patches], dtype=np.int64)
    return (lambda idx: pixels[idx]), labels


def train(network, patches, epochs, learning_rate=0.01, batch_size=64, seed=0, on_epoch=None):
    """Plain SGD on shuffled minibatches; returns the network and per-epoch mean loss."""
    if len(patches) == 0:
        raise ValueError("no training patches")
    get_batch, labels = _as_arrays(patches, network.dtype)
    rng = np.random.default_rng(seed)
    result = TrainResult(network)
    n = len(labels)
    last_good = 0
    for epoch in range(1, epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        total = 0.0
        correct = 0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            x = get_batch(idx)
            y = labels[idx]
            logits = network.forward(x)
            loss, dlogits = cross_entropy(logits, y)
            if not np.isfinite(loss):
                raise TrainingError(epoch, last_good)
            correct += int((logits.argmax(axis=1) == y).sum())
            network.zero_grad()
            network.backward(dlogits)
            if learning_rate:
                for p in network.params():
                    p.values -= (learning_rate * p.grad).astype(p.values.dtype, copy=False)
            total += loss * len(idx)
        mean_loss = total / n
        if not np.isfinite(mean_loss):
            raise TrainingError(epoch, last_good)
        last_good = epoch
        result.losses.append(mean_loss)
        result.accuracies.append(correct / n)
        log.info(
            "epoch %d/%d loss %.5f acc %.4f (%.1fs)",
            epoch,
            epochs,
            mean_loss,
            correct / n,
            time.perf_counter() - t0,
        )
        if on_epoch is not None:
            on_epoch(epoch, mean_loss)
    return result


def save_weights(network, path, config_hash=""):
    """Binary checkpoint: header, then each parameter as shape + row-major float64."""
    tag = config_hash.encode()
    params = network.params()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(
            struct.pack(
                "<IIII", CHECKPOINT_VERSION, network.patch_size, network.kernel_size, len(tag)
            )
        )
        f.write(tag)
        f.write(struct.pack("<I", len(params)))
        for p in params:
            f.write(struct.pack("<I", p.values.ndim))
            f.write(struct.pack(f"<{p.values.ndim}I", *p.values.shape))
            f.write(np.ascontiguousarray(p.values, dtype="<f8").tobytes())


def load_weights(path, dtype=np.float32):
    data = Path(path).read_bytes()
    if data[:8] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a geoseg weight file")
    pos = 8
    version, n, k, tag_len = struct.unpack_from("<IIII", data, pos)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    pos += 16 + tag_len
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    net = Network(n, k, dtype=dtype, zero=True)
    params = net.params()
    if count != len(params):
        raise FormatError(f"{path}: {count} tensors, network has {len(params)}")
    for p in params:
        (ndim,) = struct.unpack_from("<I", data, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        if tuple(shape) != p.values.shape:
            raise FormatError(f"{path}: tensor shape {shape} != expected {p.values.shape}")
        size = int(np.prod(shape))
        values = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape)
        pos += 8 * size
        p.values = values.astype(dtype)
    return net


def write_loss_csv(path, losses, header=None):
    lines = [f"# {h}" for h in (header or [])]
    lines.append("epoch,mean_loss")
    lines += [f"{i},{loss:.10g}" for i, loss in enumerate(losses, 1)]
    Path(path).write_text("\n".join(lines) + "\n")

"""Binary checkpoints: network parameters plus optimizer and RNG state.

Layout: 8-byte magic ``AMNRECK1``, little-endian uint32 header length, a
UTF-8 JSON header (layer sizes, optimizer hyperparameters, RNG snapshots,
free-form metadata), then raw little-endian float64 blocks: per layer the
weight matrix row-major followed by the bias vector, then, if optimizer
state is present, all first moments and all second moments in the same
order. Enough to resume training bit-exactly.
"""

from __future__ import annotations

import json
import struct
from typing import Any

import numpy as np

from .nn import DenseClassifier
from .optim import OptimState

__all__ = ["save_checkpoint", "load_checkpoint", "CheckpointError"]

MAGIC = b"AMNRECK1"


class CheckpointError(RuntimeError):
    """Malformed or truncated checkpoint file."""


def _blocks_for(layer_sizes: list[int]) -> list[tuple[int, ...]]:
    shapes = []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        shapes.append((fan_out, fan_in))
        shapes.append((fan_out,))
    return shapes


def save_checkpoint(
    path,
    net: DenseClassifier,
    optim: OptimState | None = None,
    rng_states: dict[str, Any] | None = None,
    meta: dict[str, Any] | None = None,
) -> None:
    header = {
        "layer_sizes": net.layer_sizes,
        "optimizer": None,
        "rng": rng_states,
        "meta": meta or {},
    }
    if optim is not None:
        header["optimizer"] = {
            "lr": optim.lr,
            "weight_decay": optim.weight_decay,
            "beta1": optim.beta1,
            "beta2": optim.beta2,
            "eps": optim.eps,
            "step": optim.step,
        }
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        for p in net.parameters():
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())
        if optim is not None:
            for arr in optim.m + optim.v:
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[DenseClassifier, OptimState | None, dict[str, Any]]:
    """Returns ``(net, optim_or_None, header)``; header keeps ``rng`` and ``meta``."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise CheckpointError(f"bad magic {magic!r}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        sizes = [int(s) for s in header["layer_sizes"]]
        shapes = _blocks_for(sizes)

        def read_blocks() -> list[np.ndarray]:
            out = []
            for shape in shapes:
                n = int(np.prod(shape))
                buf = fh.read(8 * n)
                if len(buf) != 8 * n:
                    raise CheckpointError("truncated parameter block")
                out.append(np.frombuffer(buf, dtype="<f8").reshape(shape).copy())
            return out

        net = DenseClassifier(sizes, init="zeros")
        net.load_parameters(read_blocks())

        optim = None
        if header.get("optimizer") is not None:
            h = header["optimizer"]
            optim = OptimState(
                lr=h["lr"], weight_decay=h["weight_decay"],
                beta1=h["beta1"], beta2=h["beta2"], eps=h["eps"], step=h["step"],
                m=read_blocks(), v=read_blocks(),
            )
        trailing = fh.read(1)
        if trailing:
            raise CheckpointError("unexpected trailing bytes")
    return net, optim, header

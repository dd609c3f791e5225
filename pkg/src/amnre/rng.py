"""Seeded random streams with derivable, collision-free child streams.

Every source of randomness in the package goes through :class:`Rng`, which
wraps a counter-based Philox generator keyed by ``(seed, stream path)``.
Two properties matter:

* the stream is a pure function of ``(seed, path)``: same key, bit-identical
  draws, on any machine and with any worker layout;
* ``child(i)`` derives an independent stream, so e.g. dataset record ``i``
  or MCMC chain ``c`` can own its randomness regardless of execution order.
"""

from __future__ import annotations

from typing import Any

import numpy as np

__all__ = ["Rng"]

_MAX_STREAM_ID = 2**32


class Rng:
    """Deterministic random stream keyed by a 64-bit seed and a stream path."""

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must be in [0, 2**64), got {seed}")
        for sid in path:
            if not 0 <= int(sid) < _MAX_STREAM_ID:
                raise ValueError(f"stream ids must be in [0, 2**32), got {sid}")
        self.seed = seed
        self.path = tuple(int(sid) for sid in path)
        seq = np.random.SeedSequence(seed, spawn_key=self.path)
        self.generator = np.random.Generator(np.random.Philox(seq))

    def child(self, *ids: int) -> "Rng":
        """Independent stream for ``(seed, path + ids)``; never advances self."""
        return Rng(self.seed, self.path + ids)

    # Thin pass-throughs for the draws used across the package; anything
    # exotic can go through `.generator` directly.
    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self.generator.uniform(low, high, size)

    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)

    def integers(self, low: int, high: int, size=None, endpoint: bool = False):
        return self.generator.integers(low, high, size, endpoint=endpoint)

    def random(self, size=None):
        return self.generator.random(size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    # -- state capture for exact resumption --------------------------------

    def state(self) -> dict[str, Any]:
        """JSON-serializable snapshot: key identity plus Philox internals."""
        st = self.generator.bit_generator.state
        return {
            "seed": self.seed,
            "path": list(self.path),
            "counter": [int(v) for v in st["state"]["counter"]],
            "key": [int(v) for v in st["state"]["key"]],
            "buffer": [int(v) for v in st["buffer"]],
            "buffer_pos": int(st["buffer_pos"]),
            "has_uint32": int(st["has_uint32"]),
            "uinteger": int(st["uinteger"]),
        }

    @classmethod
    def from_state(cls, state: dict[str, Any]) -> "Rng":
        rng = cls(state["seed"], tuple(state["path"]))
        bg = rng.generator.bit_generator
        st = bg.state
        st["state"]["counter"] = np.array(state["counter"], dtype=np.uint64)
        st["state"]["key"] = np.array(state["key"], dtype=np.uint64)
        st["buffer"] = np.array(state["buffer"], dtype=np.uint64)
        st["buffer_pos"] = state["buffer_pos"]
        st["has_uint32"] = state["has_uint32"]
        st["uinteger"] = state["uinteger"]
        bg.state = st
        return rng

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, path={self.path})"

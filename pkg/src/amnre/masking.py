"""Binary subset masks over the parameter coordinates.

A mask selects a nonempty subset of the D parameters; the all-zero mask is
excluded everywhere, so the mask distribution is uniform over the 2^D - 1
remaining subsets. Masks are stored as integer bitsets where coordinate 0
is the most significant bit, matching the textual form: ``"10100"`` selects
coordinates 0 and 2 of a 5-dimensional space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import Rng

__all__ = [
    "SubsetMask",
    "sample_mask",
    "sample_mask_values",
    "apply_mask",
    "enumerate_masks",
]

MAX_DIM = 62  # uniform integer sampling bound; far above any use here


@dataclass(frozen=True, order=True)
class SubsetMask:
    """Nonzero binary vector selecting a parameter subspace."""

    dim: int
    value: int  # bitset, coordinate 0 = most significant bit

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not 1 <= self.value < (1 << self.dim):
            raise ValueError(f"mask value {self.value} not in [1, 2^{self.dim})")

    @classmethod
    def from_bits(cls, bits) -> "SubsetMask":
        bits = [int(b) for b in bits]
        if any(b not in (0, 1) for b in bits):
            raise ValueError("bits must be 0 or 1")
        value = 0
        for b in bits:
            value = (value << 1) | b
        return cls(len(bits), value)

    @classmethod
    def from_string(cls, text: str) -> "SubsetMask":
        if not text or any(ch not in "01" for ch in text):
            raise ValueError(f"bad mask string {text!r}")
        return cls.from_bits(int(ch) for ch in text)

    @classmethod
    def full(cls, dim: int) -> "SubsetMask":
        return cls(dim, (1 << dim) - 1)

    @classmethod
    def single(cls, dim: int, coordinate: int) -> "SubsetMask":
        if not 0 <= coordinate < dim:
            raise ValueError(f"coordinate {coordinate} outside [0, {dim})")
        return cls(dim, 1 << (dim - 1 - coordinate))

    def to_string(self) -> str:
        return format(self.value, f"0{self.dim}b")

    def bits(self) -> tuple[int, ...]:
        return tuple(int(ch) for ch in self.to_string())

    def as_array(self) -> np.ndarray:
        """0.0/1.0 float vector, coordinate order (the network input encoding)."""
        return np.array(self.bits(), dtype=np.float64)

    def indices(self) -> tuple[int, ...]:
        """Selected coordinate indices, ascending."""
        return tuple(i for i, b in enumerate(self.bits()) if b)

    @property
    def n_selected(self) -> int:
        return int(self.value).bit_count()

    def contains(self, coordinate: int) -> bool:
        """True when the given coordinate is selected."""
        if not 0 <= coordinate < self.dim:
            raise ValueError(f"coordinate {coordinate} outside [0, {self.dim})")
        return bool((self.value >> (self.dim - 1 - coordinate)) & 1)

    def __str__(self) -> str:
        return self.to_string()


def sample_mask(rng: Rng, dim: int) -> SubsetMask:
    """Uniform draw over the 2^dim - 1 nonzero masks."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if dim > MAX_DIM:
        raise ValueError(f"dim {dim} exceeds the {MAX_DIM}-bit sampling bound")
    value = int(rng.integers(1, (1 << dim) - 1, endpoint=True))
    return SubsetMask(dim, value)


def sample_mask_values(rng: Rng, dim: int, n: int) -> np.ndarray:
    """Batched mask sampling: (n, dim) array of 0.0/1.0 rows, none all-zero."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if dim > MAX_DIM:
        raise ValueError(f"dim {dim} exceeds the {MAX_DIM}-bit sampling bound")
    values = rng.integers(1, (1 << dim) - 1, size=n, endpoint=True).astype(np.uint64)
    shifts = np.arange(dim - 1, -1, -1, dtype=np.uint64)
    return ((values[:, None] >> shifts[None, :]) & np.uint64(1)).astype(np.float64)


def apply_mask(theta: np.ndarray, mask: SubsetMask) -> np.ndarray:
    """Coordinate-wise product; cleared coordinates come out exactly 0."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape[-1] != mask.dim:
        raise ValueError(f"theta has {theta.shape[-1]} coordinates, mask has {mask.dim}")
    return theta * mask.as_array()


def enumerate_masks(dim: int, size: int | None = None) -> list[SubsetMask]:
    """All nonzero masks in ascending integer order, optionally filtered by subset size."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if dim > 20:
        raise ValueError("full enumeration is capped at dim <= 20")
    masks = [SubsetMask(dim, v) for v in range(1, 1 << dim)]
    if size is not None:
        masks = [m for m in masks if m.n_selected == size]
    return masks

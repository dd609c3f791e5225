"""Binary datasets of (theta, x) simulator draws with per-record seeding.

Layout: a fixed 48-byte header (magic ``AMNREDS1``, parameter dimension,
observation dimension, record count, seed, 16-byte NUL-padded simulator
tag), followed by ``count`` float64 little-endian records of
``param_dim + obs_dim`` values each, theta first.

Record ``i`` is generated from its own random stream derived from
``(seed, i)``, so any record can be regenerated in isolation and the file
content is independent of worker count or generation order.
"""

from __future__ import annotations

import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .rng import Rng

__all__ = ["Dataset", "DatasetError", "generate", "default_workers", "THREADS_ENV"]

MAGIC = b"AMNREDS1"
_HEADER = struct.Struct("<8sIIQQ16s")  # 48 bytes
TAG_BYTES = 16
THREADS_ENV = "AMNRE_THREADS"


class DatasetError(RuntimeError):
    """Malformed, truncated, or inconsistent dataset file."""


def default_workers() -> int:
    """Worker count from the AMNRE_THREADS environment variable (min 1)."""
    raw = os.environ.get(THREADS_ENV, "")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


@dataclass(frozen=True)
class DatasetHeader:
    param_dim: int
    obs_dim: int
    count: int
    seed: int
    tag: str

    @property
    def record_width(self) -> int:
        return self.param_dim + self.obs_dim

    def pack(self) -> bytes:
        raw_tag = self.tag.encode("ascii")
        if len(raw_tag) > TAG_BYTES:
            raise DatasetError(f"simulator tag {self.tag!r} exceeds {TAG_BYTES} bytes")
        return _HEADER.pack(
            MAGIC, self.param_dim, self.obs_dim, self.count, self.seed, raw_tag
        )

    @classmethod
    def unpack(cls, blob: bytes) -> "DatasetHeader":
        if len(blob) < _HEADER.size:
            raise DatasetError("file too short for a dataset header")
        magic, d, dx, count, seed, raw_tag = _HEADER.unpack(blob[: _HEADER.size])
        if magic != MAGIC:
            raise DatasetError(f"bad magic {magic!r}")
        return cls(int(d), int(dx), int(count), int(seed), raw_tag.rstrip(b"\x00").decode("ascii"))


def _fill_range(simulator, seed: int, start: int, stop: int) -> np.ndarray:
    """Rows [start, stop): per-record streams (seed, i, 0) for theta, (seed, i, 1) for x."""
    width = simulator.param_dim + simulator.obs_dim
    out = np.empty((stop - start, width), dtype=np.float64)
    for i in range(start, stop):
        theta = simulator.sample_prior(Rng(seed, path=(i, 0)))
        x = simulator.simulate(theta, Rng(seed, path=(i, 1)))
        out[i - start, : simulator.param_dim] = theta
        out[i - start, simulator.param_dim :] = x
    return out


def generate(path, simulator, count: int, seed: int, workers: int | None = None) -> "Dataset":
    """Simulate ``count`` records to ``path`` and return the opened dataset.

    ``workers=None`` reads AMNRE_THREADS. Output bytes are identical for any
    worker count.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if workers is None:
        workers = default_workers()
    header = DatasetHeader(simulator.param_dim, simulator.obs_dim, count, seed, simulator.tag)

    chunk = 8192
    spans = [(a, min(a + chunk, count)) for a in range(0, count, chunk)]
    with open(path, "wb") as fh:
        fh.write(header.pack())
        if workers == 1 or len(spans) == 1:
            for a, b in spans:
                fh.write(_fill_range(simulator, seed, a, b).astype("<f8").tobytes())
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_fill_range, simulator, seed, a, b) for a, b in spans]
                for fut in futures:  # submission order == record order
                    fh.write(fut.result().astype("<f8").tobytes())
    return Dataset.open(path)


class Dataset:
    """Read-only memory-mapped view of a generated dataset file."""

    def __init__(self, path, header: DatasetHeader, records: np.ndarray):
        self.path = path
        self.header = header
        self._records = records

    @classmethod
    def open(cls, path) -> "Dataset":
        with open(path, "rb") as fh:
            header = DatasetHeader.unpack(fh.read(_HEADER.size))
        expected = _HEADER.size + 8 * header.count * header.record_width
        actual = os.path.getsize(path)
        if actual != expected:
            raise DatasetError(f"{path}: size {actual} != expected {expected} for header {header}")
        records = np.memmap(path, dtype="<f8", mode="r", offset=_HEADER.size).reshape(
            header.count, header.record_width
        )
        return cls(path, header, records)

    def __len__(self) -> int:
        return self.header.count

    @property
    def param_dim(self) -> int:
        return self.header.param_dim

    @property
    def obs_dim(self) -> int:
        return self.header.obs_dim

    @property
    def seed(self) -> int:
        return self.header.seed

    @property
    def tag(self) -> str:
        return self.header.tag

    @property
    def thetas(self) -> np.ndarray:
        return self._records[:, : self.param_dim]

    @property
    def xs(self) -> np.ndarray:
        return self._records[:, self.param_dim :]

    def batch(self, indices) -> tuple[np.ndarray, np.ndarray]:
        """Materialized (thetas, xs) copies for the given record indices."""
        rows = self._records[np.asarray(indices)]
        return np.array(rows[:, : self.param_dim]), np.array(rows[:, self.param_dim :])

    def record(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        row = np.array(self._records[i])
        return row[: self.param_dim], row[self.param_dim :]

    def x_stats(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-coordinate (mean, std) of the observations, std floored away from 0."""
        loc = self.xs.mean(axis=0)
        scale = np.maximum(self.xs.std(axis=0), 1e-12)
        return loc, scale

    def to_csv(self, path, limit: int | None = None) -> None:
        n = self.header.count if limit is None else min(limit, self.header.count)
        cols = [f"theta{i}" for i in range(self.param_dim)]
        cols += [f"x{i}" for i in range(self.obs_dim)]
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            np.savetxt(fh, self._records[:n], fmt="%.17g", delimiter=",")

"""Reference posteriors by random-walk Metropolis on the tractable likelihood.

Chains are vectorized: one numpy step advances every chain, but each chain
consumes only its own random streams (proposal noise and acceptance
uniforms pre-drawn in blocks), so results are independent of block size
and of how chains are scheduled.

The SLCP posterior is invariant under independent sign flips of theta3 and
theta4 (only their squares enter the covariance), so instead of trusting
the chains to hop between the four symmetric modes, sample signs are
re-randomized exactly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import slcp
from .masking import SubsetMask
from .posterior import Axis, MarginalHistogram
from .rng import Rng

__all__ = [
    "McmcConfig",
    "SampleSet",
    "SampleSetError",
    "acceptance_probability",
    "random_walk_metropolis",
    "mh_sample",
    "symmetrize",
    "sample_histogram",
    "save_sampleset",
    "load_sampleset",
    "ACCEPT_RATE_RANGE",
    "FEW_SAMPLES_THRESHOLD",
]

MAGIC = b"AMNREMC1"
ACCEPT_RATE_RANGE = (0.05, 0.7)
FEW_SAMPLES_THRESHOLD = 1000
_BLOCK = 16384  # pre-draw granularity; cannot affect results (streams are sequential)


class SampleSetError(RuntimeError):
    pass


@dataclass(frozen=True)
class McmcConfig:
    n_chains: int = 8
    steps: int = 200_000
    burn_in: int = 20_000
    thin: int = 10
    proposal_std: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.n_chains < 1:
            raise ValueError("need at least one chain")
        if not 0 <= self.burn_in < self.steps:
            raise ValueError("burn_in must satisfy 0 <= burn_in < steps")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.proposal_std <= 0:
            raise ValueError("proposal_std must be > 0")

    def kept_per_chain(self) -> int:
        span = self.steps - self.burn_in
        return (span + self.thin - 1) // self.thin


@dataclass
class SampleSet:
    """Posterior draws with per-chain acceptance bookkeeping."""

    samples: np.ndarray  # (n, d), chains concatenated in order
    n_chains: int
    acceptance_rates: np.ndarray  # (n_chains,)
    config: McmcConfig
    observation: np.ndarray | None = None
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        self.acceptance_rates = np.asarray(self.acceptance_rates, dtype=np.float64)
        if self.samples.ndim != 2:
            raise ValueError("samples must be (n, d)")
        if self.acceptance_rates.shape != (self.n_chains,):
            raise ValueError("one acceptance rate per chain")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def param_dim(self) -> int:
        return self.samples.shape[1]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(",".join(f"theta{i}" for i in range(self.param_dim)) + "\n")
            np.savetxt(fh, self.samples, fmt="%.17g", delimiter=",")


def acceptance_probability(log_target_new, log_target_old):
    """Metropolis rule min(1, exp(new - old)), safe against -inf proposals."""
    delta = np.asarray(log_target_new, dtype=np.float64) - np.asarray(
        log_target_old, dtype=np.float64
    )
    return np.minimum(1.0, np.exp(np.minimum(delta, 0.0)))


def random_walk_metropolis(log_target_batch, init: np.ndarray, steps: int,
                           proposal_std, rng: Rng, burn_in: int = 0, thin: int = 1):
    """Gaussian random-walk Metropolis, every chain advanced in lockstep.

    ``log_target_batch`` maps (C, d) states to (C,) log densities (may be
    -inf). Returns ``(kept, acceptance_rates)`` with ``kept`` of shape
    (C, n_kept, d). Chain c draws only from ``rng.child(c)``'s streams.
    """
    init = np.atleast_2d(np.asarray(init, dtype=np.float64))
    n_chains, d = init.shape
    std = np.broadcast_to(np.asarray(proposal_std, dtype=np.float64), (d,))

    noise_streams = [rng.child(c).child(1) for c in range(n_chains)]
    accept_streams = [rng.child(c).child(2) for c in range(n_chains)]

    states = init.copy()
    log_t = log_target_batch(states)
    if not np.all(np.isfinite(log_t)):
        raise ValueError("every chain must start at a point of finite log target")

    kept = np.empty((n_chains, (steps - burn_in + thin - 1) // thin, d))
    accepts = np.zeros(n_chains, dtype=np.int64)
    out = 0
    done = 0
    while done < steps:
        block = min(_BLOCK, steps - done)
        noise = np.stack([s.standard_normal((block, d)) for s in noise_streams])
        log_u = np.log(np.stack([s.uniform(size=block) for s in accept_streams]))
        for t in range(block):
            proposal = states + std * noise[:, t, :]
            log_p = log_target_batch(proposal)
            take = log_u[:, t] < log_p - log_t
            states[take] = proposal[take]
            log_t[take] = log_p[take]
            accepts += take
            step = done + t
            if step >= burn_in and (step - burn_in) % thin == 0:
                kept[:, out, :] = states
                out += 1
        done += block
    return kept, accepts / steps


def _slcp_log_target(x: np.ndarray):
    def log_target(thetas: np.ndarray) -> np.ndarray:
        lp = slcp.log_prior_batch(thetas)
        out = np.full(thetas.shape[0], -np.inf)
        ok = np.isfinite(lp)
        if np.any(ok):
            out[ok] = lp[ok] + slcp.log_likelihood_batch(thetas[ok], x)
        return out

    return log_target


def mh_sample(x: np.ndarray, cfg: McmcConfig, rng: Rng | None = None) -> SampleSet:
    """Ground-truth SLCP posterior draws for one observation.

    Chains start at independent prior draws; burn-in is discarded and the
    remainder thinned. An acceptance rate outside ACCEPT_RATE_RANGE is
    recorded as a warning, not an error.
    """
    x = np.asarray(x, dtype=np.float64)
    if rng is None:
        rng = Rng(cfg.seed)
    init = np.stack(
        [slcp.sample_prior(rng.child(c).child(0)) for c in range(cfg.n_chains)]
    )
    kept, rates = random_walk_metropolis(
        _slcp_log_target(x), init, cfg.steps, cfg.proposal_std, rng,
        burn_in=cfg.burn_in, thin=cfg.thin,
    )
    warnings = []
    lo, hi = ACCEPT_RATE_RANGE
    for c, r in enumerate(rates):
        if not lo <= r <= hi:
            warnings.append(f"chain {c} acceptance rate {r:.3f} outside [{lo}, {hi}]")
    samples = kept.reshape(-1, kept.shape[2])
    return SampleSet(samples, cfg.n_chains, rates, cfg, observation=x, warnings=warnings)


def symmetrize(sample_set: SampleSet, rng: Rng, coordinates=(2, 3)) -> SampleSet:
    """Re-randomize the signs of the given coordinates with probability 1/2.

    Exact for SLCP's theta3/theta4: the likelihood depends on their squares
    only, so the posterior is invariant under each flip and the four
    symmetric modes get equal mass by construction.
    """
    samples = sample_set.samples.copy()
    n = samples.shape[0]
    for k, coord in enumerate(coordinates):
        signs = 1.0 - 2.0 * rng.child(k).integers(0, 2, size=n).astype(np.float64)
        samples[:, coord] *= signs
    return replace(sample_set, samples=samples)


def sample_histogram(sample_set: SampleSet | np.ndarray, mask: SubsetMask,
                     bins: int = 100, box_lo: float = slcp.BOX_LO,
                     box_hi: float = slcp.BOX_HI) -> MarginalHistogram:
    """Normalized histogram of the selected coordinates over the prior box.

    Laplace-smoothed with 0.5 pseudo-counts per bin so downstream KL terms
    never divide by an empty bin; fewer than FEW_SAMPLES_THRESHOLD samples
    sets the low_ess flag.
    """
    if mask.n_selected not in (1, 2):
        raise ValueError("histograms are built for 1 or 2 selected coordinates")
    samples = sample_set.samples if isinstance(sample_set, SampleSet) else np.asarray(sample_set)
    axes = tuple(Axis(c, float(box_lo), float(box_hi), bins) for c in mask.indices())
    pts = samples[:, list(mask.indices())]
    counts, _ = np.histogramdd(pts, bins=[a.edges() for a in axes])
    counts += 0.5
    vol = 1.0
    for a in axes:
        vol *= a.width
    densities = counts / (counts.sum() * vol)
    n = samples.shape[0]
    return MarginalHistogram(mask, axes, densities, ess=float(n),
                             low_ess=n < FEW_SAMPLES_THRESHOLD)


# -- persistence ----------------------------------------------------------------


def save_sampleset(path, sample_set: SampleSet) -> None:
    """Binary layout: magic, uint32 header length, JSON header, float64 rows."""
    header = {
        "count": len(sample_set),
        "param_dim": sample_set.param_dim,
        "seed": sample_set.config.seed,
        "config": {k: getattr(sample_set.config, k) for k in McmcConfig.__dataclass_fields__},
        "n_chains": sample_set.n_chains,
        "acceptance_rates": [float(r) for r in sample_set.acceptance_rates],
        "observation": None
        if sample_set.observation is None
        else [float(v) for v in sample_set.observation],
        "warnings": list(sample_set.warnings),
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(sample_set.samples.astype("<f8").tobytes())


def load_sampleset(path) -> SampleSet:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise SampleSetError(f"bad magic {magic!r}")
        raw_len = fh.read(4)
        if len(raw_len) != 4:
            raise SampleSetError("truncated header")
        (hlen,) = struct.unpack("<I", raw_len)
        try:
            header = json.loads(fh.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as err:
            raise SampleSetError(f"bad header: {err}") from err
        count, d = int(header["count"]), int(header["param_dim"])
        payload = fh.read()
    expected = 8 * count * d
    if len(payload) != expected:
        raise SampleSetError(f"payload {len(payload)} bytes, expected {expected}")
    samples = np.frombuffer(payload, dtype="<f8").reshape(count, d)
    obs = header.get("observation")
    return SampleSet(
        samples.copy(),
        int(header["n_chains"]),
        np.array(header["acceptance_rates"], dtype=np.float64),
        McmcConfig(**header["config"]),
        observation=None if obs is None else np.array(obs, dtype=np.float64),
        warnings=list(header.get("warnings", [])),
    )

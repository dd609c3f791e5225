"""Grid posteriors over parameter subspaces from a ratio estimator.

The surrogate marginal posterior is exp(log-ratio) times the marginal
prior. For 1d and 2d masks it is evaluated on a regular grid at bin
centers over the prior box and normalized by the Riemann sum in log
space, giving a proper density histogram. Higher-order subspaces are
served through raw log-ratio evaluation, not histograms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .masking import SubsetMask
from .rng import Rng

__all__ = [
    "MarginalHistogram",
    "PosteriorError",
    "marginal_histogram",
    "hpd_levels",
    "marginalize_full",
    "average_histograms",
    "write_histogram_csv",
    "read_histogram_csv",
    "ESS_WARN_THRESHOLD",
]

ESS_WARN_THRESHOLD = 50.0


class PosteriorError(RuntimeError):
    pass


@dataclass(frozen=True)
class Axis:
    coordinate: int
    lo: float
    hi: float
    bins: int

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.bins

    def centers(self) -> np.ndarray:
        return self.lo + (np.arange(self.bins) + 0.5) * self.width

    def edges(self) -> np.ndarray:
        return self.lo + np.arange(self.bins + 1) * self.width


@dataclass
class MarginalHistogram:
    """Normalized density histogram over a 1d or 2d parameter subspace.

    ``densities`` has one axis per selected coordinate; the Riemann sum
    ``densities.sum() * bin_volume`` is 1 up to rounding. ``low_ess`` marks
    importance-sampled histograms whose effective sample size fell below
    ESS_WARN_THRESHOLD.
    """

    mask: SubsetMask
    axes: tuple[Axis, ...]
    densities: np.ndarray
    ess: float | None = None
    low_ess: bool = False

    def __post_init__(self):
        if self.mask.n_selected != len(self.axes):
            raise ValueError("one axis per selected coordinate")
        if self.densities.shape != tuple(a.bins for a in self.axes):
            raise ValueError(
                f"density shape {self.densities.shape} does not match axes"
            )

    @property
    def bin_volume(self) -> float:
        out = 1.0
        for a in self.axes:
            out *= a.width
        return out

    def total_mass(self) -> float:
        return float(self.densities.sum() * self.bin_volume)

    def masses(self) -> np.ndarray:
        return self.densities * self.bin_volume

    def mean(self) -> np.ndarray:
        """Per-axis posterior means under the histogram."""
        m = self.masses()
        out = []
        for k, a in enumerate(self.axes):
            marg = m.sum(axis=tuple(i for i in range(m.ndim) if i != k))
            out.append(float(np.sum(a.centers() * marg)))
        return np.array(out)

    def std(self) -> np.ndarray:
        m = self.masses()
        mu = self.mean()
        out = []
        for k, a in enumerate(self.axes):
            marg = m.sum(axis=tuple(i for i in range(m.ndim) if i != k))
            out.append(float(np.sqrt(np.sum((a.centers() - mu[k]) ** 2 * marg))))
        return np.array(out)


def _grid_axes(simulator, mask: SubsetMask, bins: int) -> tuple[Axis, ...]:
    lo = np.broadcast_to(np.asarray(simulator.box_lo, dtype=np.float64), (mask.dim,))
    hi = np.broadcast_to(np.asarray(simulator.box_hi, dtype=np.float64), (mask.dim,))
    return tuple(Axis(c, float(lo[c]), float(hi[c]), bins) for c in mask.indices())


def _grid_points(axes: tuple[Axis, ...]) -> np.ndarray:
    """(n_cells, k) bin-center coordinates, C order (last axis fastest)."""
    mesh = np.meshgrid(*[a.centers() for a in axes], indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def _normalize(log_density: np.ndarray, axes: tuple[Axis, ...]) -> np.ndarray:
    peak = np.max(log_density)
    if not np.isfinite(peak):
        raise PosteriorError(f"grid mass underflow; max log-density {peak}")
    rel = np.exp(log_density - peak)
    vol = 1.0
    for a in axes:
        vol *= a.width
    return (rel / (rel.sum() * vol)).reshape(tuple(a.bins for a in axes))


def marginal_histogram(est, simulator, x: np.ndarray, mask: SubsetMask,
                       bins: int = 100) -> MarginalHistogram:
    """Surrogate posterior density over the masked subspace on a bins^k grid.

    The estimator is evaluated at bin centers with unselected coordinates
    zeroed (they cannot influence the output); the marginal prior is added
    pointwise and the result normalized by the Riemann sum.
    """
    k = mask.n_selected
    if k not in (1, 2):
        raise ValueError("histograms are built for 1 or 2 selected coordinates")
    if bins < 2:
        raise ValueError("bins must be >= 2")
    axes = _grid_axes(simulator, mask, bins)
    pts = _grid_points(axes)
    thetas = np.zeros((pts.shape[0], mask.dim))
    thetas[:, list(mask.indices())] = pts
    log_r = est.log_ratio_batch(thetas, np.asarray(x)[None, :], mask)
    log_post = log_r + simulator.log_prior_marginal(pts, mask)
    return MarginalHistogram(mask, axes, _normalize(log_post, axes))


def hpd_levels(hist: MarginalHistogram, credibilities) -> np.ndarray:
    """Highest-posterior-density thresholds, one per credibility level.

    For each level c this is the largest density t such that the bins with
    density >= t carry total mass >= c; bins tied at t are all inside the
    region.
    """
    creds = np.asarray(credibilities, dtype=np.float64)
    if np.any(creds <= 0.0) or np.any(creds >= 1.0):
        raise ValueError("credibilities must lie in (0, 1)")
    if np.any(np.diff(creds) < 0):
        raise ValueError("credibilities must be ascending")
    dens = np.sort(hist.densities.reshape(-1))[::-1]
    cum = np.cumsum(dens * hist.bin_volume)
    out = np.empty(len(creds))
    for j, c in enumerate(creds):
        idx = int(np.searchsorted(cum, c, side="left"))
        idx = min(idx, len(dens) - 1)
        out[j] = dens[idx]
    return out


def marginalize_full(est, simulator, x: np.ndarray, target: SubsetMask,
                     mc_samples: int, rng: Rng, bins: int = 100) -> MarginalHistogram:
    """Target marginal recovered from the full-mask surrogate by importance
    sampling: theta ~ prior, weight r(theta, x, full), histogram the target
    coordinates. Used to check full-vs-marginal self-consistency.
    """
    if target.n_selected not in (1, 2):
        raise ValueError("histograms are built for 1 or 2 selected coordinates")
    full = SubsetMask.full(target.dim)
    thetas = simulator.sample_prior_batch(rng, mc_samples)
    log_w = est.log_ratio_batch(thetas, np.asarray(x)[None, :], full)
    log_w = log_w - np.max(log_w)
    w = np.exp(log_w)
    wsum = w.sum()
    if wsum <= 0.0:
        raise PosteriorError("all importance weights underflowed")
    ess = float(wsum**2 / np.sum(w**2))

    axes = _grid_axes(simulator, target, bins)
    pts = thetas[:, list(target.indices())]
    counts, _ = np.histogramdd(pts, bins=[a.edges() for a in axes], weights=w)
    vol = 1.0
    for a in axes:
        vol *= a.width
    densities = counts / (wsum * vol)
    return MarginalHistogram(
        target, axes, densities, ess=ess, low_ess=ess < ESS_WARN_THRESHOLD
    )


def average_histograms(hists) -> MarginalHistogram:
    """Mean density across same-grid histograms (e.g. independent trainings)."""
    hists = list(hists)
    if not hists:
        raise ValueError("need at least one histogram")
    first = hists[0]
    for h in hists[1:]:
        if h.mask != first.mask or h.axes != first.axes:
            raise ValueError("histograms live on different grids")
    dens = np.mean([h.densities for h in hists], axis=0)
    esses = [h.ess for h in hists if h.ess is not None]
    ess = min(esses) if esses else None
    return MarginalHistogram(
        first.mask, first.axes, dens,
        ess=ess, low_ess=any(h.low_ess for h in hists),
    )


# -- CSV interchange -----------------------------------------------------------


def write_histogram_csv(hist: MarginalHistogram, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# mask={hist.mask.to_string()}\n")
        for a in hist.axes:
            fh.write(f"# axis coord={a.coordinate} lo={a.lo!r} hi={a.hi!r} bins={a.bins}\n")
        if hist.ess is not None:
            fh.write(f"# ess={hist.ess!r} low_ess={int(hist.low_ess)}\n")
        names = [f"center{k}" for k in range(len(hist.axes))]
        fh.write(",".join(names + ["density"]) + "\n")
        pts = _grid_points(hist.axes)
        flat = hist.densities.reshape(-1)
        for row, d in zip(pts, flat):
            fh.write(",".join(f"{float(v)!r}" for v in row) + f",{float(d)!r}\n")


def read_histogram_csv(path) -> MarginalHistogram:
    mask = None
    axes: list[Axis] = []
    ess = None
    low_ess = False
    rows: list[float] = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("# mask="):
                mask = SubsetMask.from_string(line.split("=", 1)[1])
            elif line.startswith("# axis "):
                kv = dict(part.split("=") for part in line[7:].split())
                axes.append(Axis(int(kv["coord"]), float(kv["lo"]), float(kv["hi"]), int(kv["bins"])))
            elif line.startswith("# ess="):
                parts = dict(part.split("=") for part in line[2:].split())
                ess = float(parts["ess"])
                low_ess = bool(int(parts["low_ess"]))
            elif line.startswith("#") or line.startswith("center"):
                continue
            else:
                rows.append(float(line.split(",")[-1]))
    if mask is None or not axes:
        raise PosteriorError(f"{path}: missing mask or axis header")
    shape = tuple(a.bins for a in axes)
    if len(rows) != int(np.prod(shape)):
        raise PosteriorError(f"{path}: {len(rows)} rows for grid {shape}")
    return MarginalHistogram(mask, tuple(axes), np.array(rows).reshape(shape),
                             ess=ess, low_ess=low_ess)

"""Quantitative validation: histogram KL, percentile calibration, a loss oracle.

Three independent lamps. KL between a surrogate histogram and a sample
histogram of reference draws measures posterior quality per subset.
Percentile calibration checks that held-out draws look uniform under
their own 1d surrogate marginals; uniformity only shows the surrogate
averages back to the prior over observations, which a correct posterior
must do but an x-blind prior copy also does, so it is a smoke alarm and
not a certificate. The discrete oracle grid-minimizes the contrastive
loss cell by cell and confirms the closed-form optimum j/(j+m), which is
what makes the trained logit interpretable as a log ratio.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .masking import SubsetMask
from .posterior import MarginalHistogram, _grid_axes, marginal_histogram
from .rng import Rng

__all__ = [
    "kl_divergence",
    "percentile",
    "ks_uniform",
    "CalibrationReport",
    "calibration_cdf",
    "bayes_optimal_oracle",
    "write_kl_csv",
]


def kl_divergence(p: MarginalHistogram, q: MarginalHistogram) -> float:
    """KL(p || q) in nats between two histograms on the same grid.

    Computed from bin masses; bins where p carries no mass contribute
    nothing. q must be positive wherever p is (pseudo-count smoothing of
    sample histograms guarantees this). Direction matters: put the
    reference first to penalize the other side for dropping its modes.
    """
    if p.axes != q.axes:
        raise ValueError("histograms live on different grids")
    pm = p.masses().reshape(-1)
    qm = q.masses().reshape(-1)
    hot = pm > 0.0
    if np.any(qm[hot] <= 0.0):
        raise ValueError("q has empty bins where p has mass; smooth q first")
    return float(np.sum(pm[hot] * np.log(pm[hot] / qm[hot])))


def _bin_index(t: float, lo: float, width: float, bins: int) -> int:
    k = int(np.floor((t - lo) / width))
    return min(max(k, 0), bins - 1)


def percentile(est, simulator, theta_star, x_star, coordinate: int, rng: Rng,
               bins: int = 100) -> float:
    """Randomized PIT of one parameter under its 1d surrogate marginal.

    Returns the histogram mass strictly below the bin containing
    theta_star[coordinate] plus a uniform-random fraction of that bin's
    own mass. The randomization makes the discrete statistic continuous:
    draws from the histogram itself yield exactly uniform percentiles.
    """
    theta_star = np.asarray(theta_star, dtype=np.float64)
    mask = SubsetMask.single(simulator.param_dim, coordinate)
    hist = marginal_histogram(est, simulator, np.asarray(x_star), mask, bins=bins)
    masses = hist.masses().reshape(-1)
    axis = hist.axes[0]
    k = _bin_index(float(theta_star[coordinate]), axis.lo, axis.width, bins)
    below = float(masses[:k].sum())
    return below + float(rng.uniform()) * float(masses[k])


def ks_uniform(values) -> float:
    """Kolmogorov-Smirnov distance of values in [0, 1] to Uniform(0, 1)."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    n = v.size
    if n == 0:
        raise ValueError("need at least one value")
    up = np.arange(1, n + 1) / n - v
    down = v - np.arange(0, n) / n
    return float(max(up.max(), down.max()))


@dataclass(frozen=True)
class CalibrationReport:
    """Sorted percentiles and their KS distance to uniform, per coordinate."""

    coordinates: tuple
    percentiles: np.ndarray  # (n_coordinates, n_pairs), each row ascending
    ks: np.ndarray  # (n_coordinates,)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            for c, k in zip(self.coordinates, self.ks):
                fh.write(f"# ks coordinate={c} value={float(k)!r}\n")
            fh.write("coordinate,rank,percentile\n")
            for row, c in enumerate(self.coordinates):
                for rank, v in enumerate(self.percentiles[row]):
                    fh.write(f"{c},{rank},{float(v)!r}\n")


def calibration_cdf(est, simulator, thetas, xs, rng: Rng, bins: int = 100,
                    coordinates=None) -> CalibrationReport:
    """Percentiles of held-out (theta, x) pairs in every 1d surrogate marginal.

    Batches the grid evaluation over pairs, which is what makes thousands
    of pairs affordable; per pair this matches :func:`percentile` up to
    the independent randomization draw. The uniform fractions for
    coordinate c come from ``rng.child(c)``.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    n, dim = thetas.shape
    if n < 100:
        raise ValueError("need at least 100 pairs for a meaningful CDF")
    if xs.shape[0] != n:
        raise ValueError("one observation per parameter vector")
    coords = tuple(range(dim)) if coordinates is None else tuple(coordinates)

    percs = np.empty((len(coords), n))
    chunk = max(1, 32768 // bins)  # bound peak activation memory
    for row, c in enumerate(coords):
        mask = SubsetMask.single(dim, c)
        axis = _grid_axes(simulator, mask, bins)[0]
        grid = axis.centers()
        log_prior = simulator.log_prior_marginal(grid[:, None], mask)
        masses = np.empty((n, bins))
        for start in range(0, n, chunk):
            stop = min(start + chunk, n)
            m = stop - start
            block_thetas = np.zeros((m * bins, dim))
            block_thetas[:, c] = np.tile(grid, m)
            block_xs = np.repeat(xs[start:stop], bins, axis=0)
            log_r = est.log_ratio_batch(block_thetas, block_xs, mask)
            log_post = log_r.reshape(m, bins) + log_prior[None, :]
            peak = log_post.max(axis=1, keepdims=True)
            if not np.all(np.isfinite(peak)):
                raise ValueError("grid mass underflow in calibration")
            rel = np.exp(log_post - peak)
            masses[start:stop] = rel / rel.sum(axis=1, keepdims=True)
        idx = np.clip(
            np.floor((thetas[:, c] - axis.lo) / axis.width).astype(int), 0, bins - 1
        )
        below = np.cumsum(masses, axis=1) - masses
        u = rng.child(c).uniform(size=n)
        rows = np.arange(n)
        percs[row] = below[rows, idx] + u * masses[rows, idx]

    percs.sort(axis=1)
    ks = np.array([ks_uniform(percs[row]) for row in range(len(coords))])
    return CalibrationReport(coords, percs, ks)


def _refine_minimum(j: float, m: float, grid: int, rounds: int) -> float:
    # iterated bracketing; offset centers keep log() off the 0 and 1 edges
    lo, hi = 0.0, 1.0
    best = 0.5
    for _ in range(rounds):
        qs = lo + (hi - lo) * (np.arange(grid) + 0.5) / grid
        loss = -j * np.log(qs) - m * np.log1p(-qs)
        b = int(np.argmin(loss))
        best = float(qs[b])
        step = (hi - lo) / grid
        lo, hi = max(lo, best - 1.5 * step), min(hi, best + 1.5 * step)
    return best


def bayes_optimal_oracle(joint, grid: int = 512, rounds: int = 3):
    """Optimal classifier tables for the contrastive loss on a discrete joint.

    For each cell of a joint table over (theta_subset, x) the pointwise
    loss j * (-ln q) + m * (-ln(1 - q)), with j the joint mass and m the
    product of the marginals, is minimized two ways: numerically by
    iterated grid refinement, and in closed form q = j / (j + m). Both
    tables are returned so agreement is checkable cell by cell. A zero
    joint cell with positive marginals is forced to q = 0 (the boundary
    minimum the grid cannot reach exactly); cells with m == 0 have no
    unique minimizer and are left NaN.
    """
    joint = np.asarray(joint, dtype=np.float64)
    if joint.ndim != 2:
        raise ValueError("joint must be a 2d table over (theta_subset, x)")
    if joint.shape[0] > 16 or joint.shape[1] > 16:
        raise ValueError("tables above 16x16 defeat the point of a brute-force oracle")
    if np.any(joint < 0.0) or abs(joint.sum() - 1.0) > 1e-9:
        raise ValueError("joint must be a normalized distribution")
    p_theta = joint.sum(axis=1)
    p_x = joint.sum(axis=0)
    prod = np.outer(p_theta, p_x)

    numeric = np.full(joint.shape, np.nan)
    closed = np.full(joint.shape, np.nan)
    for i, k in np.ndindex(*joint.shape):
        m = prod[i, k]
        if m == 0.0:
            continue
        j = joint[i, k]
        closed[i, k] = j / (j + m)
        numeric[i, k] = 0.0 if j == 0.0 else _refine_minimum(j, m, grid, rounds)
    return numeric, closed


def write_kl_csv(path, rows) -> None:
    """One line per mask: bit-string, KL(reference||surrogate), KL(surrogate||reference)."""
    with open(path, "w") as fh:
        fh.write("mask,kl_forward,kl_reverse\n")
        for mask, fwd, rev in rows:
            fh.write(f"{mask.to_string()},{float(fwd)!r},{float(rev)!r}\n")

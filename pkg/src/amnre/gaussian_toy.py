"""One-dimensional conjugate Gaussian model with every quantity in closed form.

theta ~ N(0, 1), x | theta ~ N(theta, 1). The evidence is N(0, 2), the
posterior is N(x/2, 1/2), and the likelihood-to-evidence log-ratio is
``log N(x; theta, 1) - log N(x; 0, 2)``. This is the end-to-end oracle for
the whole estimation pipeline: anything trained on draws from this model
can be compared against exact values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .masking import SubsetMask
from .rng import Rng

__all__ = [
    "GaussianToySimulator",
    "ExactToyRatio",
    "exact_log_ratio",
    "posterior_mean_std",
]

# Grid domain for histograms; wide enough that truncated prior/posterior
# mass is negligible (~6e-5 of prior draws fall outside).
GRID_LO = -5.0
GRID_HI = 5.0


def _normal_logpdf(x, mean, var):
    x = np.asarray(x, dtype=np.float64)
    return -0.5 * np.log(2.0 * np.pi * var) - 0.5 * (x - mean) ** 2 / var


def exact_log_ratio(theta, x):
    """log N(x; theta, 1) - log N(x; 0, 2), broadcast over inputs."""
    theta = np.asarray(theta, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    return _normal_logpdf(x, theta, 1.0) - _normal_logpdf(x, 0.0, 2.0)


def posterior_mean_std(x: float) -> tuple[float, float]:
    return 0.5 * float(x), float(np.sqrt(0.5))


@dataclass(frozen=True)
class GaussianToySimulator:
    """Simulator-protocol wrapper for the conjugate toy."""

    tag: str = "gauss1d"
    param_dim: int = 1
    obs_dim: int = 1

    @property
    def box_lo(self) -> np.ndarray:
        return np.array([GRID_LO])

    @property
    def box_hi(self) -> np.ndarray:
        return np.array([GRID_HI])

    @property
    def theta_loc(self) -> np.ndarray:
        return np.zeros(1)

    @property
    def theta_scale(self) -> np.ndarray:
        return np.ones(1)

    def sample_prior(self, rng: Rng) -> np.ndarray:
        return rng.standard_normal(1)

    def simulate(self, theta: np.ndarray, rng: Rng) -> np.ndarray:
        return np.asarray(theta, dtype=np.float64)[:1] + rng.standard_normal(1)

    def sample_prior_batch(self, rng: Rng, n: int) -> np.ndarray:
        return rng.standard_normal((n, 1))

    def log_prior_marginal(self, points: np.ndarray, mask: SubsetMask) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if mask.dim != 1 or points.shape[1] != 1:
            raise ValueError("the toy has a single parameter")
        return _normal_logpdf(points[:, 0], 0.0, 1.0)


class ExactToyRatio:
    """Oracle standing in for a trained estimator: exact marginal log-ratios."""

    param_dim = 1
    obs_dim = 1

    def log_ratio(self, theta, x, mask: SubsetMask) -> float:
        return float(exact_log_ratio(np.asarray(theta)[0], np.asarray(x)[0]))

    def log_ratio_batch(self, thetas, xs, masks) -> np.ndarray:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        return exact_log_ratio(thetas[:, 0], np.broadcast_to(xs[:, 0], thetas.shape[0]))

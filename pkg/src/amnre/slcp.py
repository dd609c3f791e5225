"""The SLCP benchmark: a 5-parameter simulator with tractable likelihood.

``theta`` lives in the open box (-3, 3)^5 under a uniform prior. The five
parameters set a bivariate Gaussian: mean ``(theta_1, theta_2)``, scales
``s1 = theta_3**2`` and ``s2 = theta_4**2``, correlation ``rho =
tanh(theta_5)``, covariance ``[[s1^2, rho*s1*s2], [rho*s1*s2, s2^2]]``.
An observation is four independent points from it, flattened to 8
numbers. The squares make the likelihood invariant under sign flips of
``theta_3`` and ``theta_4``, which is where the four symmetric posterior
modes come from.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .masking import SubsetMask
from .rng import Rng

__all__ = [
    "PARAM_DIM",
    "OBS_DIM",
    "BOX_LO",
    "BOX_HI",
    "SlcpSimulator",
    "sample_prior",
    "simulate",
    "log_likelihood",
    "log_likelihood_batch",
    "log_prior",
]

PARAM_DIM = 5
OBS_DIM = 8
BOX_LO = -3.0
BOX_HI = 3.0

# Keeps log-densities finite when a proposal lands on theta_3 = 0 or
# theta_4 = 0 (prior measure zero, but reachable to float precision).
COV_JITTER = 1e-12

_LOG_PRIOR_IN_BOX = -PARAM_DIM * np.log(BOX_HI - BOX_LO)


def sample_prior(rng: Rng) -> np.ndarray:
    """One draw from the uniform prior, strictly inside the open box."""
    theta = rng.uniform(BOX_LO, BOX_HI, PARAM_DIM)
    while np.any((theta <= BOX_LO) | (theta >= BOX_HI)):
        bad = (theta <= BOX_LO) | (theta >= BOX_HI)
        theta[bad] = rng.uniform(BOX_LO, BOX_HI, int(bad.sum()))
    return theta


def _cov_factor(theta: np.ndarray) -> np.ndarray:
    """Lower-triangular factor L with L @ L.T equal to the covariance."""
    s1 = theta[2] ** 2
    s2 = theta[3] ** 2
    rho = np.tanh(theta[4])
    return np.array([[s1, 0.0], [rho * s2, s2 * np.sqrt(1.0 - rho**2)]])


def simulate(theta: np.ndarray, rng: Rng) -> np.ndarray:
    """Four points z_j = mu + L u_j with u_j standard normal, flattened to 8 reals.

    A degenerate covariance (theta_3 or theta_4 equal to 0) simply produces
    deterministic components; no jitter is added when sampling.
    """
    theta = np.asarray(theta, dtype=np.float64)
    mu = theta[:2]
    ell = _cov_factor(theta)
    u = rng.standard_normal((4, 2))
    return (mu + u @ ell.T).reshape(OBS_DIM)


def _cov_terms(thetas: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Jittered covariance entries (a, b, c) = (var_x, var_y, cov) per row."""
    s1 = thetas[:, 2] ** 2
    s2 = thetas[:, 3] ** 2
    rho = np.tanh(thetas[:, 4])
    a = s1**2 + COV_JITTER
    b = s2**2 + COV_JITTER
    c = rho * s1 * s2
    return a, b, c


def log_likelihood_batch(thetas: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Log-likelihood of one observation under many parameter vectors, (n,)."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    pts = np.asarray(x, dtype=np.float64).reshape(4, 2)
    a, b, c = _cov_terms(thetas)
    det = a * b - c**2
    dx = pts[None, :, 0] - thetas[:, None, 0]
    dy = pts[None, :, 1] - thetas[:, None, 1]
    quad = (b[:, None] * dx**2 - 2.0 * c[:, None] * dx * dy + a[:, None] * dy**2) / det[:, None]
    return -4.0 * np.log(2.0 * np.pi) - 2.0 * np.log(det) - 0.5 * quad.sum(axis=1)


def log_likelihood(theta: np.ndarray, x: np.ndarray) -> float:
    """Sum over the four points of the bivariate Gaussian log-density."""
    return float(log_likelihood_batch(np.asarray(theta)[None, :], x)[0])


def log_prior(theta: np.ndarray) -> float:
    """Uniform box density: -5 ln 6 strictly inside (-3, 3)^5, -inf outside."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (PARAM_DIM,):
        raise ValueError(f"expected shape ({PARAM_DIM},), got {theta.shape}")
    if np.all((theta > BOX_LO) & (theta < BOX_HI)):
        return _LOG_PRIOR_IN_BOX
    return -np.inf


def log_prior_batch(thetas: np.ndarray) -> np.ndarray:
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    inside = np.all((thetas > BOX_LO) & (thetas < BOX_HI), axis=1)
    return np.where(inside, _LOG_PRIOR_IN_BOX, -np.inf)


@dataclass(frozen=True)
class SlcpSimulator:
    """Protocol object bundling the SLCP prior, simulator and grid domain."""

    tag: str = "slcp"
    param_dim: int = PARAM_DIM
    obs_dim: int = OBS_DIM

    @property
    def box_lo(self) -> np.ndarray:
        return np.full(PARAM_DIM, BOX_LO)

    @property
    def box_hi(self) -> np.ndarray:
        return np.full(PARAM_DIM, BOX_HI)

    @property
    def theta_loc(self) -> np.ndarray:
        return np.zeros(PARAM_DIM)

    @property
    def theta_scale(self) -> np.ndarray:
        # std of U(-3, 3)
        return np.full(PARAM_DIM, np.sqrt(3.0))

    def sample_prior(self, rng: Rng) -> np.ndarray:
        return sample_prior(rng)

    def simulate(self, theta: np.ndarray, rng: Rng) -> np.ndarray:
        return simulate(theta, rng)

    def sample_prior_batch(self, rng: Rng, n: int) -> np.ndarray:
        thetas = rng.uniform(BOX_LO, BOX_HI, (n, PARAM_DIM))
        bad = (thetas <= BOX_LO) | (thetas >= BOX_HI)
        while np.any(bad):
            thetas[bad] = rng.uniform(BOX_LO, BOX_HI, int(bad.sum()))
            bad = (thetas <= BOX_LO) | (thetas >= BOX_HI)
        return thetas

    def log_prior_marginal(self, points: np.ndarray, mask: SubsetMask) -> np.ndarray:
        """Log-density of the prior marginal on the masked coordinates."""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        k = mask.n_selected
        if points.shape[1] != k:
            raise ValueError(f"expected {k} columns for mask {mask}, got {points.shape[1]}")
        inside = np.all((points > BOX_LO) & (points < BOX_HI), axis=1)
        return np.where(inside, -k * np.log(BOX_HI - BOX_LO), -np.inf)

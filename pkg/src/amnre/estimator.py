"""Mask-conditioned classifier head producing marginal log-ratios.

The network sees the concatenation ``[theta * a, a, x]`` (masked
parameters, the 0/1 mask itself, and the observation) and its scalar
logit is the log of the likelihood-to-evidence ratio for the selected
subspace. Feeding the mask alongside ``theta * a`` disambiguates a
parameter that is genuinely zero from one that was masked out.
"""

from __future__ import annotations

import numpy as np

from . import checkpoint
from .masking import SubsetMask
from .nn import DenseClassifier, softplus_losses
from .rng import Rng

__all__ = ["RatioEstimator", "pair_loss", "surrogate_log_posterior"]

# Reference hidden shape from the benchmark runs; desk-scale jobs use
# trainer.DESK_HIDDEN instead.
REFERENCE_HIDDEN = (7, 256)

MASK_ENCODING = "theta*a || a (0/1 reals, coordinate 0 first) || x"


class RatioEstimator:
    """Dense classifier over ``[theta * a, a, x]`` with fixed input standardization.

    ``theta_loc``/``theta_scale`` come from the prior (so cleared coordinates
    stay exactly 0 after standardization); ``x_loc``/``x_scale`` are estimated
    from a training set and stored with the model.
    """

    def __init__(
        self,
        net: DenseClassifier,
        param_dim: int,
        obs_dim: int,
        theta_loc=None,
        theta_scale=None,
        x_loc=None,
        x_scale=None,
    ):
        expected = 2 * param_dim + obs_dim
        if net.input_dim != expected:
            raise ValueError(f"net input dim {net.input_dim} != 2*{param_dim}+{obs_dim}")
        self.net = net
        self.param_dim = param_dim
        self.obs_dim = obs_dim
        self.theta_loc = self._vec(theta_loc, param_dim, 0.0)
        self.theta_scale = self._vec(theta_scale, param_dim, 1.0)
        self.x_loc = self._vec(x_loc, obs_dim, 0.0)
        self.x_scale = self._vec(x_scale, obs_dim, 1.0)
        if np.any(self.theta_scale <= 0) or np.any(self.x_scale <= 0):
            raise ValueError("standardization scales must be positive")

    @staticmethod
    def _vec(val, dim: int, default: float) -> np.ndarray:
        if val is None:
            return np.full(dim, default)
        arr = np.asarray(val, dtype=np.float64).reshape(dim)
        return arr.copy()

    @classmethod
    def build(
        cls,
        param_dim: int,
        obs_dim: int,
        hidden_layers: int,
        hidden_units: int,
        rng: Rng,
        init: str = "glorot",
        **standardization,
    ) -> "RatioEstimator":
        sizes = [2 * param_dim + obs_dim] + [hidden_units] * hidden_layers + [1]
        net = DenseClassifier(sizes, rng=rng, init=init)
        return cls(net, param_dim, obs_dim, **standardization)

    # -- input assembly ------------------------------------------------------

    def inputs(self, thetas: np.ndarray, xs: np.ndarray, mask01: np.ndarray) -> np.ndarray:
        """Standardized network batch from (n,D) thetas, (n,dx) xs, (n,D) 0/1 masks.

        Masking happens after centering so cleared coordinates are exactly 0
        regardless of ``theta_loc``.
        """
        thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        mask01 = np.atleast_2d(np.asarray(mask01, dtype=np.float64))
        n = thetas.shape[0]
        if xs.shape[0] == 1 and n > 1:
            xs = np.broadcast_to(xs, (n, self.obs_dim))
        if mask01.shape[0] == 1 and n > 1:
            mask01 = np.broadcast_to(mask01, (n, self.param_dim))
        t = ((thetas - self.theta_loc) / self.theta_scale) * mask01
        x = (xs - self.x_loc) / self.x_scale
        return np.concatenate([t, mask01, x], axis=1)

    @staticmethod
    def _mask01(masks, n: int, dim: int) -> np.ndarray:
        if isinstance(masks, SubsetMask):
            return np.broadcast_to(masks.as_array(), (n, dim))
        arr = np.atleast_2d(np.asarray(masks, dtype=np.float64))
        return arr

    def log_ratio(self, theta: np.ndarray, x: np.ndarray, mask: SubsetMask) -> float:
        """Marginal log-ratio for a single (theta, x, mask) triple."""
        return float(self.log_ratio_batch(np.asarray(theta)[None, :], np.asarray(x)[None, :], mask)[0])

    def log_ratio_batch(self, thetas: np.ndarray, xs: np.ndarray, masks) -> np.ndarray:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
        mask01 = self._mask01(masks, thetas.shape[0], self.param_dim)
        return self.net.forward(self.inputs(thetas, xs, mask01))

    # -- persistence ----------------------------------------------------------

    def save(self, path, extra_meta: dict | None = None) -> None:
        meta = {
            "kind": "ratio_estimator",
            "param_dim": self.param_dim,
            "obs_dim": self.obs_dim,
            "theta_loc": self.theta_loc.tolist(),
            "theta_scale": self.theta_scale.tolist(),
            "x_loc": self.x_loc.tolist(),
            "x_scale": self.x_scale.tolist(),
            "mask_encoding": MASK_ENCODING,
        }
        if extra_meta:
            meta.update(extra_meta)
        checkpoint.save_checkpoint(path, self.net, meta=meta)

    @classmethod
    def load(cls, path) -> "RatioEstimator":
        net, _, header = checkpoint.load_checkpoint(path)
        meta = header["meta"]
        if meta.get("kind") != "ratio_estimator":
            raise checkpoint.CheckpointError(f"not a ratio estimator file: {path}")
        return cls(
            net,
            int(meta["param_dim"]),
            int(meta["obs_dim"]),
            theta_loc=meta["theta_loc"],
            theta_scale=meta["theta_scale"],
            x_loc=meta["x_loc"],
            x_scale=meta["x_scale"],
        )


def pair_loss(
    est: RatioEstimator,
    theta_joint: np.ndarray,
    theta_marg: np.ndarray,
    x: np.ndarray,
    mask: SubsetMask,
) -> float:
    """Contrastive loss of one (joint, marginal) pair under a shared mask.

    ``softplus(-logit_joint) + softplus(logit_marg)``: the first term wants
    the jointly-drawn pair called positive, the second wants the
    independently-drawn parameters called negative. At logit 0 each term is
    ln 2, so an uninformative classifier scores 2 ln 2.
    """
    lj = est.log_ratio(theta_joint, x, mask)
    lm = est.log_ratio(theta_marg, x, mask)
    loss_pos, _ = softplus_losses(lj)
    _, loss_neg = softplus_losses(lm)
    return float(loss_pos + loss_neg)


def surrogate_log_posterior(
    est: RatioEstimator,
    theta: np.ndarray,
    x: np.ndarray,
    mask: SubsetMask,
    log_prior_marg: float,
) -> float:
    """Unnormalized marginal log-posterior: log-ratio plus marginal log-prior."""
    return est.log_ratio(theta, x, mask) + float(log_prior_marg)

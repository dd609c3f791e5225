"""Marginal likelihood-to-evidence ratio estimation with mask conditioning.

One classifier, trained once, serves every parameter subset of a
simulator: condition on a binary mask over parameters and the logit is
the marginal log-ratio for exactly that subspace.
"""

from .rng import Rng
from .masking import SubsetMask, sample_mask, enumerate_masks, apply_mask
from .nn import DenseClassifier
from .estimator import RatioEstimator
from .slcp import SlcpSimulator
from .gaussian_toy import GaussianToySimulator
from .datastore import Dataset, generate
from .trainer import TrainConfig, TrainReport, fit, resume
from .posterior import (
    MarginalHistogram,
    marginal_histogram,
    marginalize_full,
    hpd_levels,
)
from .groundtruth import McmcConfig, SampleSet, mh_sample, symmetrize, sample_histogram
from .diagnostics import (
    kl_divergence,
    percentile,
    calibration_cdf,
    CalibrationReport,
    bayes_optimal_oracle,
)

__version__ = "0.1.0"

__all__ = [
    "Rng",
    "SubsetMask",
    "sample_mask",
    "enumerate_masks",
    "apply_mask",
    "DenseClassifier",
    "RatioEstimator",
    "SlcpSimulator",
    "GaussianToySimulator",
    "Dataset",
    "generate",
    "TrainConfig",
    "TrainReport",
    "fit",
    "resume",
    "MarginalHistogram",
    "marginal_histogram",
    "marginalize_full",
    "hpd_levels",
    "McmcConfig",
    "SampleSet",
    "mh_sample",
    "symmetrize",
    "sample_histogram",
    "kl_divergence",
    "percentile",
    "calibration_cdf",
    "CalibrationReport",
    "bayes_optimal_oracle",
    "__version__",
]

"""Causal machine-learning inference on potential-outcome variance contrasts.

The absolute contrast is ``sd(Y(1)) - sd(Y(0))`` and the relative one is
``var(Y(1)) / var(Y(0))``; either differing from its null value rules out a
constant individual treatment effect.
"""

from ._jit import USE_JIT, backend_name
from .dataset import Dataset, ScalingParams, load_csv, make_folds, scale_outcome, unscale_variance
from .eif import cross_fit_se, eif_lambda, eif_psi, eif_se, eif_sigma2
from .estimators import (ContrastReport, VarianceEstimate, cross_fit, estimate_arms,
                         estimate_contrast, estimate_contrasts, one_step_sigma2, tmle_sigma2)
from .nuisance import NuisanceConfig, NuisanceFit, aipw_mean, clever_covariate, fit_nuisances

__version__ = "0.1.0"

__all__ = [
    "USE_JIT", "backend_name", "ContrastReport", "Dataset", "NuisanceConfig", "NuisanceFit",
    "ScalingParams", "VarianceEstimate", "aipw_mean", "clever_covariate", "cross_fit",
    "cross_fit_se", "eif_lambda", "eif_psi", "eif_se", "eif_sigma2", "estimate_arms",
    "estimate_contrast", "estimate_contrasts", "fit_nuisances", "load_csv", "make_folds",
    "one_step_sigma2", "scale_outcome", "tmle_sigma2", "unscale_variance",
]

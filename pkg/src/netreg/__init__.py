"""Linear regression with network effects estimated by subspace projection."""

from .baselines import OLSRegressor, RNCRegressor, SIMRegressor, fit_ols, fit_rnc, fit_sim
from .estimator import (
    FitConfig,
    FitResult,
    SpectralProjectionRegressor,
    coefficient_test,
    confidence_interval,
    contrast_inference,
    fit,
    model_guard_fit,
    network_effect_test,
    ols_constrained,
)
from .network import (
    NetworkEstimate,
    estimate_dcbm,
    estimate_sbm,
    laplacian,
    network_estimate,
    sample_inhomogeneous_er,
)
from .rank import RankSelectionReport, select_r_bootstrap, select_r_threshold
from .spectral import alignment_svd, build_projections, closed_form_projections

__version__ = "0.1.0"

__all__ = [
    "FitConfig", "FitResult", "NetworkEstimate", "OLSRegressor", "RNCRegressor",
    "RankSelectionReport", "SIMRegressor", "SpectralProjectionRegressor", "alignment_svd",
    "build_projections", "closed_form_projections", "coefficient_test", "confidence_interval",
    "contrast_inference", "estimate_dcbm", "estimate_sbm", "fit", "fit_ols", "fit_rnc",
    "fit_sim", "laplacian", "model_guard_fit", "network_effect_test", "network_estimate",
    "ols_constrained", "sample_inhomogeneous_er", "select_r_bootstrap", "select_r_threshold",
]

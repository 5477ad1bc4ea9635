"""Minimax-flavored estimation of sparse covariance functionals.

Thresholded plug-in estimators for quadratic and row-wise functionals of
sparse covariance/correlation matrices, the high-dimensional tests built
on them (two-sample means, factor-pricing alphas, correlation detection),
rate reference formulas, and a Monte Carlo harness with a CLI.
"""

from .cvselect import CvConfig, CvTrace, cv_threshold, reference_estimate
from .detect import (DetectionConfig, DetectionReport, calibrate_cutoff,
                     detect_test, envelope)
from .estimators import (FunctionalEstimate, ThresholdAssumptionWarning,
                         ThresholdSpec, ThresholdedEstimate, bs_b2,
                         cq_functionals, d_diag, empirical_cov, frobenius_sq,
                         lr_functional, q_offdiag, resolve_threshold,
                         threshold, trace_cross_ustat, trace_sq_ustat)
from .experiments import (ConfigError, ExperimentConfig, ResultTable,
                          make_threshold_spec, run_detection_hist,
                          run_functional_error, run_relative_error,
                          run_rolling_alpha, run_two_sample)
from .factortest import (AlphaTestReport, FactorPanel, j_alpha_test,
                         ols_factor_fit, rho_bar_sq, rolling_alpha_tests,
                         wd_statistic)
from .matgen import (CovarianceModel, SampleMatrix, make_model,
                     sample_gaussian, two_sample_design)
from .rates import (RateQuery, RateRegimeWarning, kappa_bar, kappa_lower,
                    phi_lr, phi_quad, psi_lr, psi_quad)
from .rng import RngSeed
from .twosample import TwoSampleReport, bs_test, cq_test, marginal_tests

__version__ = "0.1.0"

__all__ = [
    "AlphaTestReport",
    "ConfigError",
    "CovarianceModel",
    "CvConfig",
    "CvTrace",
    "DetectionConfig",
    "DetectionReport",
    "ExperimentConfig",
    "FactorPanel",
    "FunctionalEstimate",
    "RateQuery",
    "RateRegimeWarning",
    "ResultTable",
    "RngSeed",
    "SampleMatrix",
    "ThresholdAssumptionWarning",
    "ThresholdSpec",
    "ThresholdedEstimate",
    "TwoSampleReport",
    "bs_b2",
    "bs_test",
    "calibrate_cutoff",
    "cq_functionals",
    "cq_test",
    "cv_threshold",
    "d_diag",
    "detect_test",
    "empirical_cov",
    "envelope",
    "frobenius_sq",
    "j_alpha_test",
    "kappa_bar",
    "kappa_lower",
    "lr_functional",
    "make_model",
    "make_threshold_spec",
    "marginal_tests",
    "ols_factor_fit",
    "phi_lr",
    "phi_quad",
    "psi_lr",
    "psi_quad",
    "q_offdiag",
    "reference_estimate",
    "resolve_threshold",
    "rho_bar_sq",
    "rolling_alpha_tests",
    "run_detection_hist",
    "run_functional_error",
    "run_relative_error",
    "run_rolling_alpha",
    "run_two_sample",
    "sample_gaussian",
    "threshold",
    "trace_cross_ustat",
    "trace_sq_ustat",
    "two_sample_design",
    "wd_statistic",
]

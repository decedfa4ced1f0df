"""Generalized varying-coefficient partially linear models.

Local kernel quasi-likelihood for the coefficient functions, nonconcave
penalized quasi-likelihood for selecting the parametric covariates, and a
generalized likelihood ratio test for the coefficient functions.
"""

__version__ = "0.1.0"

from .bandwidth import BandwidthCV, select_bandwidth_cv
from .data import Dataset, read_csv, read_role_map
from .errors import (ConfigError, ConvergenceError, DataValidationError, GVCPLMError,
                     InsufficientWindowError, NumericalError)
from .estimator import SemiFit, backfit, fit_penalized, fit_unpenalized, select_lambda
from .families import Bernoulli, Gaussian, Poisson, deviance, get_family, quasi_loglik
from .glrt import GlrtResult, bootstrap_null, glrt, glrt_bootstrap, glrt_df
from .kernels import KernelSpec, kernel_constants, make_kernel
from .model import GVCPLMRegressor
from .penalties import PenaltySpec, penalty_deriv, penalty_value
from .smoother import CoefficientCurves, undersmooth
from .subset import SubsetResult, best_subset, criterion_lambda, oracle_fit

__all__ = [
    "BandwidthCV", "Bernoulli", "CoefficientCurves", "ConfigError", "ConvergenceError",
    "DataValidationError", "Dataset", "GVCPLMError", "GVCPLMRegressor", "Gaussian",
    "GlrtResult", "InsufficientWindowError", "KernelSpec", "NumericalError", "PenaltySpec",
    "Poisson", "SemiFit", "SubsetResult", "backfit", "best_subset", "bootstrap_null",
    "criterion_lambda", "deviance", "fit_penalized", "fit_unpenalized", "get_family",
    "glrt", "glrt_bootstrap", "glrt_df", "kernel_constants", "make_kernel", "oracle_fit",
    "penalty_deriv", "penalty_value", "quasi_loglik", "read_csv", "read_role_map",
    "select_bandwidth_cv", "select_lambda", "undersmooth",
]

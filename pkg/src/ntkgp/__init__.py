"""Recursive neural tangent kernel, Matern kernels and GP regression tools."""

from .errors import (ConditioningError, ContractError, DegenerateInputError, DomainError,
                     IngestionError, NtkGpError, NumericError, SchemaError, ShapeError)
from .kernels import (KernelSpec, MaternParams, NtkParams, gaussian_eval, gram, kappa0, kappa1,
                      laplace_eval, ntk_beta_grad, ntk_eval, ntk_eval_normalized,
                      ntk_recursion, ntk_shallow_limit)
from .gp import FitOptions, GpModel, fit, log_marginal_likelihood, predict_cov, predict_mean, sample
from .oracle import FiniteNetConfig, empirical_ntk
from .matching import (MatchReport, d_theta, length_scale_from_pair, match_bias_lengthscale,
                       posterior_match)

__version__ = "0.1.0"

__all__ = [
    "ConditioningError", "ContractError", "DegenerateInputError", "DomainError", "IngestionError",
    "NtkGpError", "NumericError", "SchemaError", "ShapeError",
    "KernelSpec", "MaternParams", "NtkParams", "gaussian_eval", "gram", "kappa0", "kappa1",
    "laplace_eval", "ntk_beta_grad", "ntk_eval", "ntk_eval_normalized", "ntk_recursion",
    "ntk_shallow_limit",
    "FitOptions", "GpModel", "fit", "log_marginal_likelihood", "predict_cov", "predict_mean", "sample",
    "FiniteNetConfig", "empirical_ntk",
    "MatchReport", "d_theta", "length_scale_from_pair", "match_bias_lengthscale", "posterior_match",
]

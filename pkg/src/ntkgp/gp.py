"""Exact Gaussian-process regression with marginal-likelihood training."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy import linalg, optimize

from .errors import ConditioningError, ContractError, ShapeError
from .kernels import KernelSpec, gram, gram_with_grads

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 1e-5


@dataclass(frozen=True)
class FitOptions:
    n_restart: int = 9
    y_rescale: bool = True
    alpha: float = DEFAULT_ALPHA
    seed: int = 0
    max_iter: int = 200
    gtol: float = 1e-8

    def __post_init__(self):
        if not self.alpha > 0:
            raise ContractError("alpha jitter must be positive")
        if self.n_restart < 0:
            raise ContractError("n_restart must be >= 0")


@dataclass(frozen=True)
class RestartResult:
    start: np.ndarray
    theta: np.ndarray
    lml: float
    ok: bool


@dataclass(frozen=True, eq=False)
class GpModel:
    """Fitted posterior state.  ``weights`` and ``chol`` refer to the rescaled targets."""

    X: np.ndarray
    y: np.ndarray
    kernel: KernelSpec
    chol: np.ndarray
    weights: np.ndarray
    y_mean: float
    y_scale: float
    lml: float
    alpha: float
    restarts: tuple = field(default_factory=tuple)


def _cholesky(K):
    try:
        return linalg.cholesky(K, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise ConditioningError(f"Cholesky factorisation failed: {exc}") from exc


def log_marginal_likelihood(X, y, kernel: KernelSpec, alpha: float = DEFAULT_ALPHA, eval_gradient=True):
    """Log evidence of ``y`` under ``N(0, K + noise*I + alpha*I)``.

    Returns ``(value, grad)`` with the gradient taken w.r.t. the log of every
    free hyperparameter (empty array when none are free or
    ``eval_gradient`` is false).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n = len(y)
    if n < 1 or len(X) != n:
        raise ContractError(f"need n >= 1 matching rows, got X {X.shape} and y {y.shape}")
    if eval_gradient:
        K, grads = gram_with_grads(kernel, X)
    else:
        K, grads = gram(kernel, X), []
    K[np.diag_indices_from(K)] += alpha
    L = _cholesky(K)
    w = linalg.cho_solve((L, True), y)
    value = -0.5 * y @ w - np.log(np.diag(L)).sum() - 0.5 * n * math.log(2 * math.pi)
    if not grads:
        return float(value), np.zeros(0)
    K_inv = linalg.cho_solve((L, True), np.eye(n))
    grad = np.array([0.5 * (w @ G @ w - np.sum(K_inv * G)) for G in grads])
    return float(value), grad


def _rescale_stats(y, y_rescale):
    if not y_rescale:
        return 0.0, 1.0
    m = float(np.mean(y))
    s = float(np.std(y))
    return m, (s if s > 0 else 1.0)


def _assemble(X, y, kernel, alpha, y_mean, y_scale, lml=None, restarts=()):
    yt = (y - y_mean) / y_scale
    K = gram(kernel, X)
    K[np.diag_indices_from(K)] += alpha
    L = _cholesky(K)
    w = linalg.cho_solve((L, True), yt)
    if lml is None:
        lml = -0.5 * yt @ w - np.log(np.diag(L)).sum() - 0.5 * len(y) * math.log(2 * math.pi)
    return GpModel(X, y, kernel, L, w, y_mean, y_scale, float(lml), alpha, tuple(restarts))


def fit(X, y, kernel: KernelSpec, opts: Optional[FitOptions] = None) -> GpModel:
    """Maximise the marginal likelihood over the kernel's free hyperparameters.

    One L-BFGS-B run starts from the kernel's current values and
    ``opts.n_restart`` more from log-uniform draws inside the bounds; the
    run with the highest likelihood wins (ties go to the earliest start).
    """
    opts = opts or FitOptions()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if len(y) == 0 or len(X) != len(y):
        raise ContractError(f"need non-empty data with matching rows, got X {X.shape}, y {y.shape}")
    y_mean, y_scale = _rescale_stats(y, opts.y_rescale)
    yt = (y - y_mean) / y_scale

    if not kernel.free_names():
        return _assemble(X, y, kernel, opts.alpha, y_mean, y_scale)

    bounds = kernel.log_bounds

    def objective(theta):
        try:
            v, g = log_marginal_likelihood(X, yt, kernel.with_theta(theta), opts.alpha)
        except ConditioningError:
            return np.inf, np.zeros_like(theta)
        return -v, -g

    rng = np.random.default_rng(opts.seed)
    starts = [np.clip(kernel.theta, bounds[:, 0], bounds[:, 1])]
    starts += [rng.uniform(bounds[:, 0], bounds[:, 1]) for _ in range(opts.n_restart)]

    results = []
    for start in starts:
        f0, _ = objective(start)
        if not np.isfinite(f0):
            results.append(RestartResult(start, start, -np.inf, False))
            continue
        res = optimize.minimize(objective, start, jac=True, method="L-BFGS-B", bounds=bounds,
                                options={"maxiter": opts.max_iter, "gtol": opts.gtol})
        ok = bool(np.isfinite(res.fun))
        results.append(RestartResult(start, res.x, -float(res.fun) if ok else -np.inf, ok))
        log.debug("restart from %s -> %s (lml %.6g)", start, res.x, -res.fun)

    good = [r for r in results if r.ok]
    if not good:
        raise ConditioningError("every optimiser start failed to factorise the covariance")
    best = max(good, key=lambda r: r.lml)  # max keeps the first of equal values
    return _assemble(X, y, kernel.with_theta(best.theta), opts.alpha, y_mean, y_scale,
                     best.lml, results)


def condition(X, y, kernel: KernelSpec, alpha: float = DEFAULT_ALPHA, y_rescale: bool = True) -> GpModel:
    """Posterior for fixed hyperparameters (no optimisation)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if len(y) == 0 or len(X) != len(y):
        raise ContractError("need non-empty data with matching rows")
    y_mean, y_scale = _rescale_stats(y, y_rescale)
    return _assemble(X, y, kernel, alpha, y_mean, y_scale)


def _check_cols(model_or_kernel, Xs):
    Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
    if isinstance(model_or_kernel, GpModel) and Xs.shape[1] != model_or_kernel.X.shape[1]:
        raise ShapeError(f"test inputs have {Xs.shape[1]} columns, model expects {model_or_kernel.X.shape[1]}")
    return Xs


def _latent(kernel: KernelSpec) -> KernelSpec:
    # test-point covariances never include the white-noise term
    return kernel if kernel.noise is None else KernelSpec(
        kernel.kind, kernel.constant, kernel.bias, kernel.length_scale, None,
        kernel.depth, kernel.normalization)


def predict_mean(model: Union[GpModel, KernelSpec], Xs) -> np.ndarray:
    """Posterior mean in original response units (zero for a prior ``KernelSpec``)."""
    Xs = _check_cols(model, Xs)
    if isinstance(model, KernelSpec):
        return np.zeros(len(Xs))
    Ks = gram(_latent(model.kernel), Xs, model.X)
    return Ks @ model.weights * model.y_scale + model.y_mean


def predict_cov(model: Union[GpModel, KernelSpec], Xs) -> np.ndarray:
    """Posterior covariance of the latent function at ``Xs``."""
    Xs = _check_cols(model, Xs)
    if isinstance(model, KernelSpec):
        return gram(_latent(model), Xs, Xs.copy())
    kern = _latent(model.kernel)
    Kss = gram(kern, Xs, Xs.copy())
    V = linalg.solve_triangular(model.chol, gram(kern, model.X, Xs), lower=True)
    cov = Kss - V.T @ V
    cov = 0.5 * (cov + cov.T)
    return cov * model.y_scale**2


def sample(model: Union[GpModel, KernelSpec], Xs, count: int, seed: int = 0,
           alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """``count`` draws from the prior (``KernelSpec``) or posterior (``GpModel``) at ``Xs``."""
    Xs = _check_cols(model, Xs)
    if count == 0:
        return np.empty((0, len(Xs)))
    mean = predict_mean(model, Xs)
    cov = predict_cov(model, Xs)
    cov[np.diag_indices_from(cov)] += alpha
    L = _cholesky(cov)
    rng = np.random.default_rng(seed)
    return mean + rng.standard_normal((count, len(Xs))) @ L.T

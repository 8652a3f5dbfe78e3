"""Matching the NTK against Matern kernels.

Three procedures live here: inverting a single kernel value into a Laplace
length-scale, a grid search over the bias that makes those per-pair
length-scales as consistent as possible, and fitting a Matern length-scale so
its GP posterior mean tracks that of an already fitted NTK GP.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from . import gp
from .dataio import pearson, rmse
from .errors import ContractError, DegenerateInputError, DomainError, NumericError
from .kernels import (GAUSSIAN, LAPLACE, MaternParams, NtkParams, KernelSpec,
                      _normalize, _recursion, laplace_eval, ntk_eval_normalized)

log = logging.getLogger(__name__)

PRECISION_FLOOR = 1e-15  # beta**2 below this is lost next to the unit-norm terms


@dataclass(frozen=True, eq=False)
class MatchReport:
    depth: int
    beta: Optional[float] = None
    length_scale: Optional[float] = None
    variance: Optional[float] = None
    d_theta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    rmse: Optional[float] = None
    rho: Optional[float] = None
    kind: Optional[str] = None
    status: str = "ok"
    curve: Optional[dict] = None  # beta grid with mean / variance of the length-scales

    def __post_init__(self):
        if self.variance is not None and self.variance < 0:
            raise ContractError("variance must be nonnegative")
        if self.rho is not None and not math.isnan(self.rho) and not -1 - 1e-12 <= self.rho <= 1 + 1e-12:
            raise ContractError("correlation must lie in [-1, 1]")

    def summary(self):
        out = {"depth": self.depth, "kind": self.kind, "beta": self.beta,
               "length_scale": self.length_scale, "variance": self.variance,
               "rmse": self.rmse, "rho": self.rho, "status": self.status}
        if len(self.d_theta):
            out["d_theta_mean"] = float(np.mean(self.d_theta))
            out["d_theta_max"] = float(np.max(self.d_theta))
        return out


# ---------------------------------------------------------------------------
# Pointwise inversion


def length_scale_from_pair(x, z, depth: int, beta: float) -> float:
    """Laplace length-scale that reproduces the normalised NTK value at ``(x, z)``."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    r = float(np.linalg.norm(x - z))
    if r == 0:
        raise DegenerateInputError("identical inputs carry no length-scale information")
    k = ntk_eval_normalized(x, z, NtkParams(depth, beta))
    if k <= 0:
        raise DomainError(f"kernel value {k:.3g} <= 0 cannot be matched by a Laplace kernel")
    if k >= 1:
        raise DegenerateInputError(f"kernel value {k!r} >= 1 gives an infinite length-scale")
    return r / -math.log(k)


def d_theta(x, z, depth: int, beta: float, length_scale: float) -> float:
    """Absolute gap between the normalised NTK and a Laplace kernel at one pair."""
    return abs(ntk_eval_normalized(x, z, NtkParams(depth, beta))
               - laplace_eval(x, z, MaternParams(length_scale)))


# ---------------------------------------------------------------------------
# Bias / length-scale grid search


def default_beta_max(depth: int) -> float:
    if depth <= 2:
        return 50.0
    if depth <= 5:
        return 10.0
    return 1e-3


def beta_grid(beta_max: float, grid_size: int = 200) -> np.ndarray:
    """Zero followed by ``grid_size - 1`` log-spaced values ending at ``beta_max``."""
    if grid_size < 2 or not beta_max > 0:
        raise ContractError("need grid_size >= 2 and beta_max > 0")
    return np.concatenate([[0.0], np.geomspace(beta_max * 1e-4, beta_max, grid_size - 1)])


def sample_sphere_pairs(dim: int, n: int, seed: int, sampler: str = "uniform"):
    """``n`` pairs of unit vectors in ``R^dim``.

    ``"gaussian"`` gives the uniform distribution on the sphere; ``"uniform"``
    normalises iid U[0, 1) entries, which keeps every pair in the positive
    orthant.
    """
    rng = np.random.default_rng(seed)
    if sampler == "gaussian":
        P = rng.standard_normal((2 * n, dim))
    elif sampler == "uniform":
        P = rng.uniform(0.0, 1.0, (2 * n, dim))
    else:
        raise ContractError(f"sampler must be 'gaussian' or 'uniform', got {sampler!r}")
    P /= np.linalg.norm(P, axis=1, keepdims=True)
    return P[0::2], P[1::2]


def _pair_length_scales(X, Z, depth, beta):
    prod = np.einsum("ij,ij->i", X, Z)
    sq_x = np.einsum("ij,ij->i", X, X)
    sq_z = np.einsum("ij,ij->i", Z, Z)
    theta, dtheta = _recursion(prod, sq_x, sq_z, depth, beta)
    k, _ = _normalize(theta, dtheta, sq_x, sq_z, depth, beta, "diagonal")
    r = np.linalg.norm(X - Z, axis=1)
    ok = (r > 0) & (k > 0) & (k < 1)
    return r[ok] / -np.log(k[ok])


def match_bias_lengthscale(dim: int, n: int, depth: int, beta_max: Optional[float] = None,
                           grid_size: int = 200, seed: int = 0, sampler: str = "uniform") -> MatchReport:
    """Pick the bias whose per-pair Laplace length-scales have the least variance.

    The same ``n`` pairs are used at every grid value, so the curve over the
    bias is smooth and the comparison is paired.
    """
    if n < 2:
        raise ContractError("need at least two pairs")
    beta_max = default_beta_max(depth) if beta_max is None else beta_max
    betas = beta_grid(beta_max, grid_size)
    X, Z = sample_sphere_pairs(dim, n, seed, sampler)
    means = np.empty(len(betas))
    variances = np.empty(len(betas))
    counts = np.empty(len(betas), dtype=int)
    for i, b in enumerate(betas):
        ells = _pair_length_scales(X, Z, depth, b)
        if len(ells) < 2:
            raise NumericError(f"fewer than two usable pairs at beta={b:g}")
        means[i], variances[i], counts[i] = ells.mean(), ells.var(), len(ells)
    best = int(np.argmin(variances))
    beta, ell = float(betas[best]), float(means[best])
    status = "ok"
    if 0 < beta * beta < PRECISION_FLOOR:
        warnings.warn(f"optimal beta {beta:.3g} is below working precision; reporting 0", RuntimeWarning)
        beta, status = 0.0, "beta_below_precision"
    gaps = np.array([d_theta(x, z, depth, beta, ell) for x, z in zip(X, Z) if not np.array_equal(x, z)])
    curve = {"beta": betas, "mean_length_scale": means, "variance": variances, "pairs_used": counts}
    return MatchReport(depth, beta, ell, float(variances[best]), gaps, kind=LAPLACE,
                       status=status, curve=curve)


# ---------------------------------------------------------------------------
# Posterior-mean matching


@dataclass(frozen=True, eq=False)
class MatchData:
    X: np.ndarray
    y: np.ndarray
    Xs: np.ndarray


def _frozen_matern(kind, length_scale, constant, noise):
    return KernelSpec.matern(kind, length_scale=length_scale, constant=constant,
                             noise=noise).fixed_all()


def matern_posterior_mean(kind, length_scale, frozen: dict, data: MatchData,
                          alpha=gp.DEFAULT_ALPHA, y_rescale=True):
    kern = _frozen_matern(kind, length_scale, frozen["constant"], frozen.get("noise"))
    model = gp.condition(data.X, data.y, kern, alpha=alpha, y_rescale=y_rescale)
    return gp.predict_mean(model, data.Xs)


def posterior_match_objective(kind: str, length_scale: float, frozen: dict, data: MatchData,
                              target, alpha=gp.DEFAULT_ALPHA, y_rescale=True) -> float:
    """Euclidean distance between ``target`` and the Matern posterior mean at ``length_scale``."""
    mean = matern_posterior_mean(kind, length_scale, frozen, data, alpha, y_rescale)
    return float(np.linalg.norm(np.asarray(target) - mean))


def minimize_length_scale(fun, lo=1e-3, hi=10.0, cap=1e5, xatol=1e-6, maxiter=500):
    """Bounded 1-D search that widens the upper bound tenfold while the optimum sits on it.

    Returns ``(length_scale, value, status)``.
    """
    while True:
        res = optimize.minimize_scalar(fun, bounds=(lo, hi), method="bounded",
                                       options={"xatol": xatol, "maxiter": maxiter})
        x, f = float(res.x), float(res.fun)
        near_top = x >= hi - 0.01 * (hi - lo)
        if near_top and hi < cap:
            hi = min(hi * 10.0, cap)
            continue
        if near_top:
            return x, f, "upper_bound_cap"
        if not res.success:
            return x, f, "not_converged"
        if x <= lo + 0.01 * (hi - lo) and lo > 0:
            return x, f, "at_lower_bound"
        return x, f, "ok"


def posterior_match(ntk_model: gp.GpModel, kind: str, data: MatchData,
                    lo=1e-3, hi=10.0, cap=1e5) -> MatchReport:
    """Fit a Matern length-scale so its posterior mean follows the NTK posterior mean.

    The Matern GP reuses the NTK model's constant, noise, jitter and response
    rescaling, leaving the length-scale as the only free quantity.
    """
    if kind not in (LAPLACE, GAUSSIAN):
        raise ContractError(f"kind must be {LAPLACE!r} or {GAUSSIAN!r}")
    vals = ntk_model.kernel.values()
    frozen = {"constant": vals["constant"], "noise": vals.get("noise")}
    y_rescale = not (ntk_model.y_mean == 0.0 and ntk_model.y_scale == 1.0)
    target = gp.predict_mean(ntk_model, data.Xs)

    def fun(ell):
        return posterior_match_objective(kind, ell, frozen, data, target, ntk_model.alpha, y_rescale)

    ell, _, status = minimize_length_scale(fun, lo, hi, cap)
    mean = matern_posterior_mean(kind, ell, frozen, data, ntk_model.alpha, y_rescale)
    log.info("matched %s length-scale %.6g (%s)", kind, ell, status)
    try:
        rho = pearson(target, mean)
    except ValueError:
        rho = float("nan")
    return MatchReport(ntk_model.kernel.depth, beta=vals["bias"], length_scale=ell,
                       rmse=rmse(target, mean), rho=rho, kind=kind, status=status,
                       curve={"ntk_mean": target, "matern_mean": mean})
